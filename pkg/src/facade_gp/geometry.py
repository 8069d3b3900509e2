"""Core geometric types: points, clouds, facade frames and 2.5D local points.

A facade frame is a local orthonormal coordinate system of a building wall:
two in-plane axes ``u``, ``v`` plus a depth axis ``n`` along the wall normal.
Depth is signed, positive toward the sensor side of the wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError

__all__ = [
    "Point3",
    "PointCloud",
    "FacadeFrame",
    "LocalPoint",
    "LocalPoints",
    "Box3",
    "to_local",
    "from_local",
    "local_to_world",
]

_ORTHO_TOL = 1e-9
_NORMAL_TOL = 1e-6


@dataclass(frozen=True)
class Point3:
    """A 3D point in meters. All components must be finite."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise ValueError("Point3 components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Point3":
        a = np.asarray(a, dtype=float)
        return Point3(float(a[0]), float(a[1]), float(a[2]))


class PointCloud:
    """An ordered set of 3D points with optional per-point unit normals.

    Backed by float64 arrays: ``xyz`` is (N, 3) and ``normals`` is (N, 3)
    or None. Immutable after construction.
    """

    __slots__ = ("xyz", "normals")

    def __init__(self, xyz, normals=None):
        xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
        if xyz.size == 0:
            xyz = xyz.reshape(0, 3)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {xyz.shape}")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        if normals is not None:
            normals = np.atleast_2d(np.asarray(normals, dtype=float))
            if normals.size == 0:
                normals = normals.reshape(0, 3)
            if normals.shape != xyz.shape:
                raise ValueError("normals must match points in shape")
            norms = np.linalg.norm(normals, axis=1)
            if normals.shape[0] and np.max(np.abs(norms - 1.0)) > _NORMAL_TOL:
                raise ValueError("normals must be unit length within 1e-6")
        xyz.setflags(write=False)
        if normals is not None:
            normals.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "normals", normals)

    def __setattr__(self, name, value):
        raise AttributeError("PointCloud is immutable")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    def __getitem__(self, i: int) -> Point3:
        return Point3.from_array(self.xyz[i])

    def select(self, indices) -> "PointCloud":
        """Sub-cloud at the given indices, preserving order."""
        normals = None if self.normals is None else self.normals[indices]
        return PointCloud(self.xyz[indices], normals)


def _check_unit(vec: np.ndarray, name: str):
    if abs(np.linalg.norm(vec) - 1.0) > _ORTHO_TOL:
        raise ValueError(f"{name} must be a unit vector")


@dataclass(frozen=True)
class FacadeFrame:
    """Local orthonormal frame of a facade: origin plus axes {u, v, n}.

    ``n`` is the depth axis (the facade normal from PCA); ``u`` and ``v``
    span the wall plane. The triple must be orthonormal within 1e-9.
    """

    origin: Point3
    u: np.ndarray
    v: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        for name in ("u", "v", "n"):
            vec = np.asarray(getattr(self, name), dtype=float).reshape(3)
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)
            _check_unit(vec, name)
        for a, b in (("u", "v"), ("u", "n"), ("v", "n")):
            if abs(float(np.dot(getattr(self, a), getattr(self, b)))) > _ORTHO_TOL:
                raise ValueError(f"frame axes {a} and {b} are not orthogonal")

    def rotation(self) -> np.ndarray:
        """3x3 matrix with rows u, v, n (world -> local)."""
        return np.vstack([self.u, self.v, self.n])


@dataclass(frozen=True)
class LocalPoint:
    """A 2.5D facade-frame sample: in-plane position, signed depth, and
    optionally the normal component along the depth axis."""

    x: tuple[float, float]
    d: float
    n_z: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.d):
            raise ValueError("depth must be finite")
        if self.n_z is not None and abs(self.n_z) > 1.0 + 1e-9:
            raise ValueError("|n_z| must be <= 1")


class LocalPoints:
    """Array-backed sequence of :class:`LocalPoint`.

    ``xy`` is (N, 2) in-plane positions, ``d`` is (N,) signed depths, and
    ``n_z`` is (N,) or None. Indexing yields LocalPoint views.
    """

    __slots__ = ("xy", "d", "n_z")

    def __init__(self, xy, d, n_z=None):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if xy.size == 0:
            xy = xy.reshape(0, 2)
        d = np.asarray(d, dtype=float).reshape(-1)
        if xy.shape != (d.shape[0], 2):
            raise ValueError("xy must be (N, 2) matching d")
        if not (np.all(np.isfinite(xy)) and np.all(np.isfinite(d))):
            raise ValueError("local coordinates must be finite")
        if n_z is not None:
            n_z = np.asarray(n_z, dtype=float).reshape(-1)
            if n_z.shape != d.shape:
                raise ValueError("n_z must match d in length")
            if n_z.shape[0] and np.max(np.abs(n_z)) > 1.0 + 1e-9:
                raise ValueError("|n_z| must be <= 1")
        for a in (xy, d) + ((n_z,) if n_z is not None else ()):
            a.setflags(write=False)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "n_z", n_z)

    def __setattr__(self, name, value):
        raise AttributeError("LocalPoints is immutable")

    def __len__(self) -> int:
        return self.d.shape[0]

    def __getitem__(self, i: int) -> LocalPoint:
        nz = None if self.n_z is None else float(self.n_z[i])
        return LocalPoint((float(self.xy[i, 0]), float(self.xy[i, 1])), float(self.d[i]), nz)

    def select(self, indices) -> "LocalPoints":
        nz = None if self.n_z is None else self.n_z[indices]
        return LocalPoints(self.xy[indices], self.d[indices], nz)


@dataclass(frozen=True)
class Box3:
    """Axis-aligned 3D box, used as the export volume for occupancy grids."""

    min_corner: Point3
    max_corner: Point3

    def __post_init__(self):
        lo, hi = self.min_corner.as_array(), self.max_corner.as_array()
        if np.any(hi <= lo):
            raise ValueError("Box3 must have positive extent on every axis")

    def extent(self) -> np.ndarray:
        return self.max_corner.as_array() - self.min_corner.as_array()


def to_local(frame: FacadeFrame, cloud: PointCloud) -> LocalPoints:
    """Transform a cloud into the facade frame.

    Positions project onto (u, v), depth onto n. When the cloud carries
    normals, their component along n is kept as ``n_z``.
    """
    rel = cloud.xyz - frame.origin.as_array()
    xy = rel @ np.column_stack([frame.u, frame.v])
    d = rel @ frame.n
    n_z = None
    if cloud.normals is not None:
        n_z = np.clip(cloud.normals @ frame.n, -1.0, 1.0)
    return LocalPoints(xy, d, n_z)


def from_local(frame: FacadeFrame, lp: LocalPoint) -> Point3:
    """Inverse of :func:`to_local` for a single sample."""
    p = (frame.origin.as_array()
         + lp.x[0] * frame.u + lp.x[1] * frame.v + lp.d * frame.n)
    return Point3.from_array(p)


def local_to_world(frame: FacadeFrame, xy, d) -> np.ndarray:
    """Vectorized inverse transform: (N, 2) positions + (N,) depths -> (N, 3)."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    d = np.asarray(d, dtype=float).reshape(-1)
    return (frame.origin.as_array()
            + np.outer(xy[:, 0], frame.u)
            + np.outer(xy[:, 1], frame.v)
            + np.outer(d, frame.n))
