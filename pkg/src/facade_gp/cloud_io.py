"""Point-cloud file ingestion and writing (ASCII XYZ and ASCII PLY)."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import CloudParseError
from .geometry import PointCloud

__all__ = ["read_cloud", "write_cloud_xyz"]

FORMATS = ("xyz_ascii", "ply_ascii")


def read_cloud(path, format: str = "xyz_ascii") -> PointCloud:
    """Read a point cloud from disk.

    ``xyz_ascii``: one point per line, 3 (x y z) or 6 (x y z nx ny nz)
    whitespace-separated columns; ``#`` comment lines and blank lines are
    skipped. ``ply_ascii``: standard ASCII PLY with x/y/z and optional
    nx/ny/nz vertex properties.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such cloud file: {path}")
    if format == "xyz_ascii":
        return _read_xyz(path)
    if format == "ply_ascii":
        return _read_ply(path)
    raise ValueError(f"unknown cloud format {format!r} (expected one of {FORMATS})")


def _read_xyz(path: Path) -> PointCloud:
    points, normals = [], []
    ncols = None
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split()
            if ncols is None:
                if len(cols) not in (3, 6):
                    raise CloudParseError(
                        f"expected 3 or 6 columns, got {len(cols)}", lineno)
                ncols = len(cols)
            elif len(cols) != ncols:
                raise CloudParseError(
                    f"expected {ncols} columns, got {len(cols)}", lineno)
            try:
                vals = [float(c) for c in cols]
            except ValueError:
                raise CloudParseError(f"non-numeric value in {line!r}", lineno) from None
            points.append(vals[:3])
            if ncols == 6:
                normals.append(vals[3:])
    if not points:
        return PointCloud(np.empty((0, 3)))
    return PointCloud(np.array(points), np.array(normals) if normals else None)


def _read_ply(path: Path) -> PointCloud:
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError("missing 'ply' magic", 1)
    vertex_count = 0
    properties: list[str] = []
    in_vertex_element = False
    body_start = None
    for i, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if line.startswith("format"):
            if "ascii" not in line:
                raise CloudParseError("only ascii PLY is supported", i)
        elif line.startswith("element"):
            parts = line.split()
            in_vertex_element = len(parts) == 3 and parts[1] == "vertex"
            if in_vertex_element:
                try:
                    vertex_count = int(parts[2])
                except ValueError:
                    raise CloudParseError("bad vertex count", i) from None
        elif line.startswith("property") and in_vertex_element:
            properties.append(line.split()[-1])
        elif line == "end_header":
            body_start = i
            break
    if body_start is None:
        raise CloudParseError("missing end_header", len(lines))
    for name in ("x", "y", "z"):
        if name not in properties:
            raise CloudParseError(f"vertex element lacks property {name!r}", body_start)
    has_normals = all(n in properties for n in ("nx", "ny", "nz"))
    col = {name: properties.index(name) for name in properties}

    points = np.empty((vertex_count, 3))
    normals = np.empty((vertex_count, 3)) if has_normals else None
    for k in range(vertex_count):
        lineno = body_start + 1 + k
        if lineno > len(lines):
            raise CloudParseError(
                f"expected {vertex_count} vertices, file ends after {k}", len(lines))
        cols = lines[lineno - 1].split()
        if len(cols) < len(properties):
            raise CloudParseError(
                f"expected {len(properties)} columns, got {len(cols)}", lineno)
        try:
            points[k] = [float(cols[col["x"]]), float(cols[col["y"]]), float(cols[col["z"]])]
            if has_normals:
                normals[k] = [float(cols[col["nx"]]), float(cols[col["ny"]]), float(cols[col["nz"]])]
        except ValueError:
            raise CloudParseError("non-numeric vertex value", lineno) from None
    if vertex_count == 0:
        return PointCloud(np.empty((0, 3)))
    return PointCloud(points, normals)


def write_cloud_xyz(cloud: PointCloud, path) -> None:
    """Write a cloud as ASCII XYZ (6 columns when normals are present)."""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w") as fh:
        for i in range(len(cloud)):
            row = [repr(float(v)) for v in cloud.xyz[i]]
            if cloud.normals is not None:
                row += [repr(float(v)) for v in cloud.normals[i]]
            fh.write(" ".join(row) + "\n")
