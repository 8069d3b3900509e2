"""Exact Gaussian-process regression over 2D facade positions.

Covers the ARD squared-exponential kernel, the exact posterior with a
constant prior mean, marginal-likelihood optimization of the inverse
squared length-scales, covariance-cutoff block partitioning, and the
one-pass chi-squared outlier filter.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.stats import chi2

__all__ = [
    "KernelParams",
    "GpSolveState",
    "GpBlock",
    "kernel_eval",
    "kernel_matrix",
    "block_size",
    "log_marginal_likelihood",
    "optimize_hyperparams",
    "build_solve_state",
    "gp_posterior",
    "gp_posterior_batch",
    "partition_blocks",
    "extended_neighborhood",
    "fit_block",
    "chi2_filter",
    "chi2_critical",
]

log = logging.getLogger(__name__)

DEFAULT_LENGTH_SCALE2 = 0.0025   # m^2, isotropic 1/b default
DEFAULT_NOISE_STD = 0.02         # m, sensor + alignment noise
DEFAULT_CMIN = 1e-4              # covariance cutoff for block sizing
DEFAULT_CHI2_ALPHA = 0.05
DEFAULT_HYPEROPT_SUBSET = 500

_B_MIN, _B_MAX = 1e-4, 1e8       # search bounds on inverse sq. length-scales
_COORD_SEARCH_ITERS = 40
_COORD_SEARCH_STEP0 = np.log(2.0)


@dataclass(frozen=True)
class KernelParams:
    """ARD kernel hyper-parameters: signal std, per-axis inverse squared
    length-scales and observation noise std."""

    sigma_p: float
    b: np.ndarray        # shape (2,), 1/m^2
    sigma_eta: float

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(2)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if self.sigma_p <= 0 or self.sigma_eta <= 0 or np.any(b <= 0):
            raise ValueError("kernel hyper-parameters must be strictly positive")

    @staticmethod
    def isotropic(sigma_p: float, length_scale2: float = DEFAULT_LENGTH_SCALE2,
                  sigma_eta: float = DEFAULT_NOISE_STD) -> "KernelParams":
        b = 1.0 / length_scale2
        return KernelParams(sigma_p, np.array([b, b]), sigma_eta)


def kernel_matrix(p: KernelParams, x_a, x_b) -> np.ndarray:
    """Gram matrix k0(x_a, x_b), shape (len(a), len(b))."""
    x_a = np.atleast_2d(np.asarray(x_a, dtype=float))
    x_b = np.atleast_2d(np.asarray(x_b, dtype=float))
    d0 = x_a[:, 0][:, None] - x_b[:, 0][None, :]
    d1 = x_a[:, 1][:, None] - x_b[:, 1][None, :]
    q = p.b[0] * d0 * d0 + p.b[1] * d1 * d1
    return p.sigma_p ** 2 * np.exp(-0.5 * q)


def kernel_eval(p: KernelParams, x, x_prime) -> float:
    """Scalar ARD kernel sigma_p^2 exp(-1/2 sum_m b_m (x_m - x'_m)^2)."""
    x = np.asarray(x, dtype=float).reshape(2)
    x_prime = np.asarray(x_prime, dtype=float).reshape(2)
    dx = x - x_prime
    return float(p.sigma_p ** 2 * np.exp(-0.5 * (p.b[0] * dx[0] ** 2 + p.b[1] * dx[1] ** 2)))


def block_size(b_scalar: float, c_min: float = DEFAULT_CMIN) -> float:
    """Distance at which the unit-signal kernel decays to c_min:
    r = sqrt(2 ln(1/c_min) / b)."""
    if b_scalar <= 0:
        raise ValueError("b must be positive")
    if not 0.0 < c_min < 1.0:
        raise ValueError("c_min must be in (0, 1)")
    return float(np.sqrt(2.0 * np.log(1.0 / c_min) / b_scalar))


class GpSolveState:
    """Trained solve state: inputs, centered targets and the Cholesky
    factorization of A = K_N + sigma_eta^2 I, plus alpha = A^-1 (y - mu0)."""

    __slots__ = ("x", "y_centered", "mu0", "chol_lower", "alpha")

    def __init__(self, x: np.ndarray, y_centered: np.ndarray, mu0: float,
                 chol_lower: np.ndarray, alpha: np.ndarray):
        self.x = x
        self.y_centered = y_centered
        self.mu0 = float(mu0)
        self.chol_lower = chol_lower
        self.alpha = alpha

    @property
    def n(self) -> int:
        return self.x.shape[0]


def build_solve_state(x, y, p: KernelParams, mu0: float) -> GpSolveState:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ValueError("need matching, non-empty X and y")
    a = kernel_matrix(p, x, x)
    a[np.diag_indices_from(a)] += p.sigma_eta ** 2
    c, low = cho_factor(a, lower=True)
    y_centered = y - mu0
    alpha = cho_solve((c, low), y_centered)
    return GpSolveState(x, y_centered, mu0, c, alpha)


def log_marginal_likelihood(p: KernelParams, mu0: float, x, y) -> float:
    """log N(y | mu0 1, K_N + sigma_eta^2 I)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = y.shape[0]
    if n == 0 or x.shape[0] != n:
        raise ValueError("need matching, non-empty X and y")
    a = kernel_matrix(p, x, x)
    a[np.diag_indices_from(a)] += p.sigma_eta ** 2
    c, low = cho_factor(a, lower=True)
    resid = y - mu0
    alpha = cho_solve((c, low), resid)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * resid @ alpha - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi))


def _stride_subset(n: int, subset_size: int) -> np.ndarray:
    if subset_size >= n:
        return np.arange(n)
    stride = int(np.ceil(n / subset_size))
    return np.arange(0, n, stride)


def optimize_hyperparams(init: KernelParams, mu0: float, x, y,
                         subset_size: int = DEFAULT_HYPEROPT_SUBSET) -> KernelParams:
    """Maximize the marginal likelihood over (b1, b2), holding sigma_p and
    sigma_eta fixed.

    Derivative-free multi-start coordinate search in log space (starts at
    init, init*4 and init/4; 40 iterations each with halving steps), run
    on a deterministic stride subsample of at most ``subset_size`` points.
    Never returns parameters with a lower subset likelihood than init.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] < 2:
        return init
    idx = _stride_subset(x.shape[0], subset_size)
    xs, ys = x[idx], y[idx]

    def objective(log_b):
        b = np.exp(np.clip(log_b, np.log(_B_MIN), np.log(_B_MAX)))
        return log_marginal_likelihood(replace(init, b=b), mu0, xs, ys)

    try:
        base = np.log(init.b)
        best_lb = base.copy()
        best_ll = objective(best_lb)
        init_ll = best_ll
        for start_scale in (0.0, np.log(4.0), -np.log(4.0)):
            lb = base + start_scale
            ll = objective(lb)
            if ll > best_ll:
                best_ll, best_lb = ll, lb.copy()
            step = _COORD_SEARCH_STEP0
            for _ in range(_COORD_SEARCH_ITERS):
                improved = False
                for m in (0, 1):
                    for delta in (step, -step):
                        cand = lb.copy()
                        cand[m] += delta
                        cll = objective(cand)
                        if cll > ll:
                            ll, lb = cll, cand
                            improved = True
                            break
                if ll > best_ll:
                    best_ll, best_lb = ll, lb.copy()
                if not improved:
                    step *= 0.5
                    if step < 1e-4:
                        break
    except np.linalg.LinAlgError:
        warnings.warn("hyper-parameter search diverged; keeping initial values",
                      RuntimeWarning, stacklevel=2)
        return init
    if best_ll <= init_ll:
        return init
    b = np.exp(np.clip(best_lb, np.log(_B_MIN), np.log(_B_MAX)))
    return replace(init, b=b)


def gp_posterior_batch(state: GpSolveState, p: KernelParams, x_star) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (means, variances) at query positions, shape (M,).

    mean = mu0 + k*^T A^-1 (y - mu0);
    var  = k0(x*, x*) - k*^T A^-1 k* + sigma_eta^2.
    """
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    k_star = kernel_matrix(p, state.x, x_star)          # (N, M)
    means = state.mu0 + k_star.T @ state.alpha
    v = solve_triangular(state.chol_lower, k_star, lower=True)
    variances = p.sigma_p ** 2 - np.einsum("ij,ij->j", v, v) + p.sigma_eta ** 2
    return means, variances


def gp_posterior(state: GpSolveState, p: KernelParams, x_star) -> tuple[float, float]:
    means, variances = gp_posterior_batch(state, p, np.asarray(x_star, dtype=float).reshape(1, 2))
    return float(means[0]), float(variances[0])


def partition_blocks(points, cell: float) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Partition points into spatial cells of the given size.

    A point at position x goes to cell (floor(x1/cell), floor(x2/cell)).
    Returns (cell index, member indices) pairs sorted by cell index; the
    members cover every point exactly once.
    """
    if cell <= 0:
        raise ValueError("cell size must be positive")
    if len(points) == 0:
        return []
    cells = np.floor(points.xy / cell).astype(np.int64)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    out = []
    for row in range(uniq.shape[0]):
        members = np.nonzero(inverse == row)[0]
        out.append(((int(uniq[row, 0]), int(uniq[row, 1])), members))
    return out


def extended_neighborhood(blocks: dict, cell_index: tuple[int, int]) -> np.ndarray:
    """Member indices of the 3x3 cell neighborhood around a central cell."""
    i, j = cell_index
    gathered = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            members = blocks.get((i + di, j + dj))
            if members is not None and len(members):
                gathered.append(np.asarray(members))
    if not gathered:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(gathered))


@dataclass(frozen=True)
class GpBlock:
    """One local GP: a central cell fitted on the extended (3x3) block's
    training points with the owning layer's mean as prior."""

    cell: tuple[int, int]
    layer: int
    mu0: float
    params: KernelParams
    state: GpSolveState
    training_indices: np.ndarray  # facade-level indices of the extended set

    def __post_init__(self):
        idx = np.asarray(self.training_indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "training_indices", idx)


def fit_block(cell: tuple[int, int], extended_indices, points, mu0: float,
              init: KernelParams, subset_size: int = DEFAULT_HYPEROPT_SUBSET,
              optimize: bool = True) -> GpBlock | None:
    """Fit one local GP on the extended block's points.

    Returns None when the extended set is empty (the caller then leaves
    the cell to the global fallback GP). ``layer`` is filled by the caller
    via dataclasses.replace when layer routing applies.
    """
    extended_indices = np.asarray(extended_indices, dtype=np.int64)
    if extended_indices.size == 0:
        return None
    x = points.xy[extended_indices]
    y = points.d[extended_indices]
    params = init
    if optimize and extended_indices.size >= 2:
        params = optimize_hyperparams(init, mu0, x, y, subset_size)
    state = build_solve_state(x, y, params, mu0)
    return GpBlock(cell, 0, mu0, params, state, extended_indices)


def chi2_critical(alpha: float = DEFAULT_CHI2_ALPHA) -> float:
    """One-dof chi-squared critical value at quantile level 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    return float(chi2.ppf(1.0 - alpha, df=1))


def chi2_filter(block: GpBlock, alpha: float = DEFAULT_CHI2_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    """One-pass outlier test on a trained block.

    Evaluates the block's posterior at each of its own training inputs,
    forms v_i^2 = (d_i - mu_i)^2 / sigma_i^2 and flags v_i^2 above the
    one-dof chi-squared critical value. Returns (kept, outliers) as local
    positions into the block's training set. If everything is flagged, the
    single point with the lowest statistic is kept and a warning raised.
    """
    crit = chi2_critical(alpha)
    means, variances = gp_posterior_batch(block.state, block.params, block.state.x)
    resid = (block.state.y_centered + block.state.mu0) - means
    v2 = resid ** 2 / variances
    outlier_mask = v2 > crit
    if outlier_mask.all():
        keep = int(np.argmin(v2))
        warnings.warn("chi-squared filter flagged every training point; "
                      "keeping the best one", RuntimeWarning, stacklevel=2)
        outlier_mask[keep] = False
    kept = np.nonzero(~outlier_mask)[0]
    outliers = np.nonzero(outlier_mask)[0]
    return kept, outliers
