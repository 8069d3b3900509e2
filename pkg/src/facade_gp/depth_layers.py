"""Depth-layer modelling of a facade: a 1D Gaussian mixture over signed
depths, histogram-peak selection of the component count, and the facet
grid that routes spatial cells to their plurality layer."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "DepthLayer",
    "GmmModel",
    "FacetGrid",
    "HistogramConfig",
    "detect_peaks",
    "detect_layer_count",
    "fit_gmm",
    "assign_layer",
    "assign_layers",
    "build_facet_grid",
]

log = logging.getLogger(__name__)

SIGMA_FLOOR = 0.005  # m, scanner precision; prevents singular components


@dataclass(frozen=True)
class DepthLayer:
    """One Gaussian depth layer: weight, mean and std (meters)."""

    weight: float
    mean: float
    std: float

    def __post_init__(self):
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("layer weight must be in (0, 1]")
        if self.std <= 0.0:
            raise ValueError("layer std must be positive")


@dataclass(frozen=True)
class GmmModel:
    """Mixture of depth layers; ``main_index`` is the heaviest component
    (the main facade plane). Layers are sorted by mean ascending."""

    layers: tuple[DepthLayer, ...]
    main_index: int
    loglik_history: tuple[float, ...] = ()
    sigma_clamped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "loglik_history", tuple(self.loglik_history))
        weights = np.array([l.weight for l in self.layers])
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("layer weights must sum to 1")
        if self.main_index != int(np.argmax(weights)):
            raise ValueError("main_index must be the argmax-weight layer")

    @property
    def k(self) -> int:
        return len(self.layers)

    def weights(self) -> np.ndarray:
        return np.array([l.weight for l in self.layers])

    def means(self) -> np.ndarray:
        return np.array([l.mean for l in self.layers])

    def stds(self) -> np.ndarray:
        return np.array([l.std for l in self.layers])


@dataclass(frozen=True)
class HistogramConfig:
    bin_width: float = 0.05                 # m
    min_prominence_fraction: float = 0.05   # of the tallest bin count
    min_peak_separation_bins: int = 2

    def __post_init__(self):
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if not 0.0 < self.min_prominence_fraction < 1.0:
            raise ValueError("min_prominence_fraction must be in (0, 1)")
        if self.min_peak_separation_bins < 1:
            raise ValueError("min_peak_separation_bins must be >= 1")


@dataclass(frozen=True)
class FacetGrid:
    """2D cell table mapping occupied facade cells to a layer index."""

    cell_size: float
    origin: np.ndarray
    table: dict

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(2)
        origin.setflags(write=False)
        object.__setattr__(self, "origin", origin)

    def cell_of(self, xy) -> tuple[int, int]:
        xy = np.asarray(xy, dtype=float)
        i = int(np.floor((xy[0] - self.origin[0]) / self.cell_size))
        j = int(np.floor((xy[1] - self.origin[1]) / self.cell_size))
        return (i, j)

    def lookup(self, xy) -> int | None:
        """Layer of the cell containing xy, or None for unobserved cells."""
        return self.table.get(self.cell_of(xy))


def _histogram(depths: np.ndarray, bin_width: float):
    dmin = float(depths.min())
    dmax = float(depths.max())
    nbins = max(1, int(np.ceil((dmax - dmin) / bin_width)))
    if dmax == dmin:
        nbins = 1
    counts, edges = np.histogram(
        depths, bins=nbins, range=(dmin, dmin + nbins * bin_width))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return counts, centers


def _local_maxima(counts: np.ndarray) -> list[int]:
    """Indices of local maxima, zero-padded at both ends; a plateau yields
    the index of its middle bin (rounded down)."""
    c = np.concatenate([[0], counts, [0]]).astype(float)
    peaks = []
    i = 1
    while i < len(c) - 1:
        if c[i] > c[i - 1]:
            j = i
            while j + 1 < len(c) and c[j + 1] == c[i]:
                j += 1
            if j + 1 < len(c) and c[j + 1] < c[i]:
                peaks.append((i + j) // 2 - 1)  # back to unpadded index
            i = j + 1
        else:
            i += 1
    return peaks


def _prominence(counts: np.ndarray, peak: int) -> float:
    """Topographic prominence of a peak over the zero-padded histogram."""
    c = np.concatenate([[0.0], counts.astype(float), [0.0]])
    p = peak + 1
    left = c[:p][::-1]
    higher = np.nonzero(left > c[p])[0]
    lo = left[:higher[0]] if higher.size else left
    left_base = lo.min() if lo.size else 0.0
    right = c[p + 1:]
    higher = np.nonzero(right > c[p])[0]
    hi = right[:higher[0]] if higher.size else right
    right_base = hi.min() if hi.size else 0.0
    return float(c[p] - max(left_base, right_base))


def detect_peaks(depths, cfg: HistogramConfig = HistogramConfig()):
    """Prominent, separated peaks of the depth histogram.

    Returns (centers, heights) in meters/counts. Candidates below
    ``min_prominence_fraction`` of the tallest bin are dropped; of any two
    candidates closer than ``min_peak_separation_bins``, only the taller
    survives. At least one peak (the tallest bin) is always returned.
    """
    depths = np.asarray(depths, dtype=float).reshape(-1)
    if depths.size == 0:
        raise ValueError("cannot detect peaks of an empty depth sample")
    if not np.all(np.isfinite(depths)):
        raise ValueError("depths must be finite")
    counts, centers = _histogram(depths, cfg.bin_width)
    threshold = cfg.min_prominence_fraction * counts.max()
    candidates = [p for p in _local_maxima(counts)
                  if _prominence(counts, p) >= threshold]
    # tallest first; ties resolved toward the lower bin index
    candidates.sort(key=lambda p: (-counts[p], p))
    kept: list[int] = []
    for p in candidates:
        if all(abs(p - q) >= cfg.min_peak_separation_bins for q in kept):
            kept.append(p)
    if not kept:
        kept = [int(np.argmax(counts))]
    kept.sort()
    return centers[kept], counts[kept].astype(float)


def detect_layer_count(depths, cfg: HistogramConfig = HistogramConfig()) -> int:
    """Number of depth layers K = number of surviving histogram peaks."""
    centers, _ = detect_peaks(depths, cfg)
    return len(centers)


def _log_densities(depths, weights, means, stds):
    # (N, K) log of weight_k * N(d | mean_k, std_k^2)
    z = (depths[:, None] - means[None, :]) / stds[None, :]
    return (np.log(weights)[None, :] - np.log(stds)[None, :]
            - 0.5 * np.log(2.0 * np.pi) - 0.5 * z * z)


def fit_gmm(depths, k: int, max_iter: int = 200, tol: float = 1e-6,
            sigma_floor: float = SIGMA_FLOOR,
            init_means=None, init_weights=None,
            hist_cfg: HistogramConfig = HistogramConfig()) -> GmmModel:
    """Fit the 1D depth mixture with EM.

    Initialization uses detected histogram peaks (means at peak centers,
    weights proportional to peak heights) when they match ``k``; otherwise
    evenly spaced depth quantiles. Components whose std collapses below
    ``sigma_floor`` are clamped there, with a warning. The returned layers
    are sorted by mean ascending and the per-iteration log-likelihoods are
    kept on the model.
    """
    depths = np.asarray(depths, dtype=float).reshape(-1)
    n = depths.size
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"cannot fit {k} components to {n} samples")

    if init_means is None:
        centers, heights = detect_peaks(depths, hist_cfg)
        if len(centers) == k:
            init_means = centers
            init_weights = heights / heights.sum()
        else:
            qs = (2.0 * np.arange(k) + 1.0) / (2.0 * k)
            init_means = np.quantile(depths, qs)
    means = np.asarray(init_means, dtype=float).copy()
    weights = (np.full(k, 1.0 / k) if init_weights is None
               else np.asarray(init_weights, dtype=float).copy())
    weights = weights / weights.sum()
    stds = np.full(k, max(0.05, sigma_floor))

    history = []
    clamped = False
    prev_ll = -np.inf
    for it in range(max_iter):
        log_dens = _log_densities(depths, weights, means, stds)
        log_norm = logsumexp(log_dens, axis=1)
        ll = float(log_norm.sum())
        history.append(ll)
        if it > 0 and ll - prev_ll < tol:
            break
        prev_ll = ll
        resp = np.exp(log_dens - log_norm[:, None])  # (N, K)
        nk = resp.sum(axis=0)
        nk = np.maximum(nk, 1e-300)
        weights = nk / n
        means = (resp * depths[:, None]).sum(axis=0) / nk
        var = (resp * (depths[:, None] - means[None, :]) ** 2).sum(axis=0) / nk
        stds = np.sqrt(var)
        if np.any(stds < sigma_floor):
            if not clamped:
                warnings.warn(
                    f"GMM component std clamped to floor {sigma_floor} m",
                    RuntimeWarning, stacklevel=2)
            clamped = True
            stds = np.maximum(stds, sigma_floor)

    order = np.argsort(means, kind="stable")
    layers = tuple(DepthLayer(float(weights[i]), float(means[i]), float(stds[i]))
                   for i in order)
    # renormalize against round-off so the weight invariant holds exactly
    total = sum(l.weight for l in layers)
    if abs(total - 1.0) > 1e-12:
        layers = tuple(DepthLayer(l.weight / total, l.mean, l.std) for l in layers)
    main = int(np.argmax([l.weight for l in layers]))
    return GmmModel(layers, main, tuple(history), clamped)


def assign_layers(gmm: GmmModel, depths) -> np.ndarray:
    """Vectorized maximum-responsibility layer assignment (ties go to the
    smaller index)."""
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    log_dens = _log_densities(depths, gmm.weights(), gmm.means(), gmm.stds())
    return np.argmax(log_dens, axis=1)


def assign_layer(gmm: GmmModel, d: float) -> int:
    return int(assign_layers(gmm, [d])[0])


def build_facet_grid(points, gmm: GmmModel, cell_size: float) -> FacetGrid:
    """Map each occupied cell to the layer holding the plurality of its
    points; ties go to the layer with the larger weight, then the smaller
    index. Cells without points are absent from the table."""
    if len(points) == 0:
        raise ValueError("cannot build a facet grid from zero points")
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    origin = np.zeros(2)
    cells = np.floor(points.xy / cell_size).astype(np.int64)
    assignment = assign_layers(gmm, points.d)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    k = gmm.k
    counts = np.zeros((uniq.shape[0], k), dtype=np.int64)
    np.add.at(counts, (inverse, assignment), 1)
    weights = gmm.weights()
    table = {}
    for row in range(uniq.shape[0]):
        c = counts[row]
        best = np.nonzero(c == c.max())[0]
        if best.size > 1:
            w = weights[best]
            best = best[w == w.max()]
        table[(int(uniq[row, 0]), int(uniq[row, 1]))] = int(best[0])
    return FacetGrid(cell_size, origin, table)
