"""Facade plane extraction: greedy sequential RANSAC plus PCA frame fitting."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .geometry import FacadeFrame, Point3, PointCloud

__all__ = ["PlaneHypothesis", "RansacConfig", "extract_facades", "pca_frame"]

log = logging.getLogger(__name__)

_RANSAC_CONFIDENCE = 0.999


@dataclass(frozen=True)
class PlaneHypothesis:
    """A plane {p : normal . p = offset} with its supporting inlier indices."""

    normal: np.ndarray
    offset: float
    inlier_indices: np.ndarray

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        idx = np.asarray(self.inlier_indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "inlier_indices", idx)

    def distances(self, xyz: np.ndarray) -> np.ndarray:
        return np.abs(xyz @ self.normal - self.offset)


@dataclass(frozen=True)
class RansacConfig:
    inlier_threshold: float = 0.10      # m, perpendicular distance
    max_iterations: int = 2000          # per extracted plane
    min_inliers: int = 500
    max_planes: int = 12
    verticality_max_tilt: float = 30.0  # deg, plane tilt from vertical
    rng_seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold <= 0 or self.max_iterations <= 0 \
                or self.min_inliers <= 0 or self.max_planes <= 0:
            raise ValueError("RANSAC parameters must be positive")
        if not 0.0 < self.verticality_max_tilt < 90.0:
            raise ValueError("verticality_max_tilt must be in (0, 90) degrees")


def _fit_plane_3pt(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, float(n @ p0)


def _tls_plane(xyz: np.ndarray):
    """Total-least-squares plane through points (PCA refit)."""
    centroid = xyz.mean(axis=0)
    cov = np.cov((xyz - centroid).T, bias=True)
    w, vecs = np.linalg.eigh(cov)
    n = vecs[:, 0]
    n = n / np.linalg.norm(n)
    return n, float(n @ centroid)


def extract_facades(cloud: PointCloud, cfg: RansacConfig) -> list[PlaneHypothesis]:
    """Greedy sequential RANSAC over the cloud.

    Repeats {sample 3 points, fit plane, count inliers}; accepts the best
    candidate when it has >= min_inliers and its tilt from vertical is
    within verticality_max_tilt, refits it by PCA on the inliers, removes
    them, and continues until max_planes or no acceptable plane remains.
    Deterministic for a fixed rng_seed.
    """
    if len(cloud) < 3:
        raise DegenerateInputError("RANSAC needs at least 3 points")
    rng = np.random.default_rng(cfg.rng_seed)
    max_sin_tilt = np.sin(np.radians(cfg.verticality_max_tilt))
    remaining = np.arange(len(cloud), dtype=np.int64)
    planes: list[PlaneHypothesis] = []

    while len(planes) < cfg.max_planes and remaining.size >= max(3, cfg.min_inliers):
        xyz = cloud.xyz[remaining]
        best_count = 0
        best_mask = None
        iters_needed = cfg.max_iterations
        it = 0
        while it < min(iters_needed, cfg.max_iterations):
            it += 1
            sample = rng.choice(remaining.size, size=3, replace=False)
            fit = _fit_plane_3pt(*xyz[sample])
            if fit is None:
                continue
            n, offset = fit
            if abs(n[2]) > max_sin_tilt:
                continue
            mask = np.abs(xyz @ n - offset) <= cfg.inlier_threshold
            count = int(mask.sum())
            if count > best_count:
                best_count = count
                best_mask = mask
                # adaptive stopping: enough trials to hit an all-inlier
                # sample with the requested confidence
                w = count / remaining.size
                if w >= 1.0:
                    break
                denom = np.log1p(-min(w ** 3, 1 - 1e-12))
                iters_needed = int(np.ceil(np.log(1 - _RANSAC_CONFIDENCE) / denom))
        if best_mask is None or best_count < cfg.min_inliers:
            break
        # refit by PCA on the accepted inliers, then recollect so that the
        # reported inliers are consistent with the refit plane
        n, offset = _tls_plane(xyz[best_mask])
        if abs(n[2]) > max_sin_tilt:
            break
        mask = np.abs(xyz @ n - offset) <= cfg.inlier_threshold
        if int(mask.sum()) < cfg.min_inliers:
            break
        inliers = remaining[mask]
        planes.append(PlaneHypothesis(n, offset, inliers))
        remaining = remaining[~mask]
        log.debug("accepted plane %d with %d inliers", len(planes), inliers.size)
    return planes


def pca_frame(cloud: PointCloud, inliers) -> FacadeFrame:
    """Facade frame from PCA of the inlier coordinates.

    The depth axis n is the eigenvector of the smallest covariance
    eigenvalue. Its sign is fixed toward the sensor side: by majority
    agreement with the inliers' normals when the cloud has normals, else
    by the side holding the majority of non-inlier points, else so that
    the first nonzero component of n is positive. u is the largest-
    eigenvalue eigenvector with u.(1,0,0) >= 0 (tie: u.(0,1,0) >= 0) and
    v = n x u completes the right-handed frame.
    """
    inliers = np.asarray(inliers, dtype=np.int64)
    if inliers.size < 3:
        raise DegenerateInputError("PCA frame needs at least 3 points")
    xyz = cloud.xyz[inliers]
    centroid = xyz.mean(axis=0)
    cov = np.cov((xyz - centroid).T, bias=True)
    w, vecs = np.linalg.eigh(cov)  # ascending eigenvalues
    if w[2] <= 0 or w[1] <= 1e-10 * w[2]:
        raise DegenerateInputError("inliers are collinear (rank-deficient covariance)")
    n = vecs[:, 0] / np.linalg.norm(vecs[:, 0])

    sign = 0.0
    if cloud.normals is not None:
        sign = float(np.sum(np.sign(cloud.normals[inliers] @ n)))
    if sign == 0.0 and inliers.size < len(cloud):
        outside = np.ones(len(cloud), dtype=bool)
        outside[inliers] = False
        side = (cloud.xyz[outside] - centroid) @ n
        sign = float(np.sum(np.sign(side)))
    if sign == 0.0:
        nz = np.nonzero(np.abs(n) > 1e-12)[0]
        sign = float(np.sign(n[nz[0]])) if nz.size else 1.0
    if sign < 0:
        n = -n

    u = vecs[:, 2] / np.linalg.norm(vecs[:, 2])
    ux = float(u @ np.array([1.0, 0.0, 0.0]))
    if ux < 0 or (ux == 0 and float(u @ np.array([0.0, 1.0, 0.0])) < 0):
        u = -u
    # remove any residual projection of u on n so the triple is orthonormal
    # to machine precision even if eigh returned slightly skew vectors
    u = u - (u @ n) * n
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    v = v / np.linalg.norm(v)
    return FacadeFrame(Point3.from_array(centroid), u, v, n)
