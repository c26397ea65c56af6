"""Region-restricted GP Bayesian optimization (squared-exponential ARD + EI)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .core import DesignPoint, ParameterSpace, Region, StructuralError

LENGTHSCALE_BOUNDS = (0.05, 5.0)
SIGNAL_VAR_BOUNDS = (0.01, 25.0)
NOISE_VAR_BOUNDS = (1e-8, 1.0)
JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
_LOG_2PI = math.log(2 * math.pi)


class InsufficientDataError(ValueError):
    pass


class GPNumericalError(ArithmeticError):
    pass


class DegenerateRegionError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    signal_var: float
    lengthscales: tuple[float, ...]
    noise_var: float

    def __post_init__(self):
        object.__setattr__(self, "lengthscales", tuple(float(v) for v in self.lengthscales))
        if not self.signal_var > 0:
            raise ValueError("signal variance must be > 0")
        if not self.noise_var >= 1e-10:
            raise ValueError("noise variance must be >= 1e-10")
        if not all(v > 0 for v in self.lengthscales):
            raise ValueError("lengthscales must be > 0")


@dataclass(frozen=True)
class GPSettings:
    n_max: int = 600
    n_best: int = 300
    n_recent: int = 300
    # hyperparameter search runs on at most this many points
    hyper_subset: int = 150
    n_starts: int = 8
    n_steps: int = 60


@dataclass(frozen=True)
class AcquisitionParams:
    pool_size: int = 1024
    q: int = 10
    xi: float = 0.01
    min_pairwise_distance: float = 0.05

    def __post_init__(self):
        if not self.pool_size >= self.q >= 1:
            raise ValueError("need pool_size >= q >= 1")
        if self.xi < 0 or self.min_pairwise_distance < 0:
            raise ValueError("xi and min_pairwise_distance must be >= 0")


def _sqdist(a: np.ndarray, b: np.ndarray, ls: np.ndarray) -> np.ndarray:
    a = a / ls
    b = b / ls
    d = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def kernel_matrix(a, b, kernel: Kernel) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    ls = np.asarray(kernel.lengthscales)
    if a.shape[1] != b.shape[1] or a.shape[1] != ls.size:
        raise StructuralError("kernel input dimensions do not match")
    return kernel.signal_var * np.exp(-0.5 * _sqdist(a, b, ls))


def kernel_eval(z1, z2, kernel: Kernel) -> float:
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    ls = np.asarray(kernel.lengthscales)
    if z1.shape != z2.shape or z1.shape != ls.shape:
        raise StructuralError("kernel input dimensions do not match")
    return float(kernel.signal_var * np.exp(-0.5 * np.sum(((z1 - z2) / ls) ** 2)))


def _cholesky(K: np.ndarray) -> np.ndarray:
    eye = np.eye(len(K))
    for jitter in JITTERS:
        try:
            return np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise GPNumericalError("Cholesky failed even with 1e-6 jitter")


@dataclass(frozen=True, eq=False)
class GpModel:
    train_inputs: np.ndarray
    train_targets: np.ndarray  # mean-centered
    kernel: Kernel
    cholesky_factor: np.ndarray
    alpha: np.ndarray
    target_mean: float

    @classmethod
    def build(cls, X, y, kernel: Kernel) -> "GpModel":
        """Condition a GP with fixed hyperparameters."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        mean = float(np.mean(y))
        yc = y - mean
        K = kernel_matrix(X, X, kernel) + kernel.noise_var * np.eye(len(X))
        L = _cholesky(K)
        alpha = solve_triangular(L.T, solve_triangular(L, yc, lower=True), lower=False)
        for arr in (X, yc, L, alpha):
            arr.setflags(write=False)
        return cls(X, yc, kernel, L, alpha, mean)

    @property
    def dim(self) -> int:
        return self.train_inputs.shape[1]

    def predict(self, Z) -> tuple[np.ndarray, np.ndarray]:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise StructuralError(f"query has dimension {Z.shape[1]}, model has {self.dim}")
        Ks = kernel_matrix(self.train_inputs, Z, self.kernel)
        mean = self.target_mean + Ks.T @ self.alpha
        v = solve_triangular(self.cholesky_factor, Ks, lower=True)
        var = np.maximum(self.kernel.signal_var - np.sum(v * v, axis=0), 0.0)
        return mean, var


def posterior(model: GpModel, z) -> tuple[float, float]:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size != model.dim:
        raise StructuralError(f"query has shape {z.shape}, model dimension is {model.dim}")
    m, v = model.predict(z[None, :])
    return float(m[0]), float(v[0])


def log_marginal_likelihood(X: np.ndarray, yc: np.ndarray, kernel: Kernel, sq: Optional[np.ndarray] = None) -> float:
    """LML of mean-centered targets; -inf when the factorization fails."""
    n = len(X)
    if sq is None:
        K = kernel_matrix(X, X, kernel)
    else:
        ls2 = np.asarray(kernel.lengthscales) ** 2
        K = kernel.signal_var * np.exp(-0.5 * (sq @ (1.0 / ls2)).reshape(n, n))
    K[np.diag_indices(n)] += kernel.noise_var
    try:
        L = _cholesky(K)
    except GPNumericalError:
        return -math.inf
    a = solve_triangular(L, yc, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG_2PI)


def _theta_bounds(d: int) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([math.log(LENGTHSCALE_BOUNDS[0])] * d + [math.log(SIGNAL_VAR_BOUNDS[0]), math.log(NOISE_VAR_BOUNDS[0])])
    hi = np.array([math.log(LENGTHSCALE_BOUNDS[1])] * d + [math.log(SIGNAL_VAR_BOUNDS[1]), math.log(NOISE_VAR_BOUNDS[1])])
    return lo, hi


def _theta_to_kernel(theta: np.ndarray, d: int) -> Kernel:
    # clip again after exp so log/exp rounding cannot step outside the bounds
    ls = np.clip(np.exp(theta[:d]), *LENGTHSCALE_BOUNDS)
    sf = min(max(float(np.exp(theta[d])), SIGNAL_VAR_BOUNDS[0]), SIGNAL_VAR_BOUNDS[1])
    sn = min(max(float(np.exp(theta[d + 1])), NOISE_VAR_BOUNDS[0]), NOISE_VAR_BOUNDS[1])
    return Kernel(sf, tuple(ls.tolist()), sn)


def start_grid(d: int, y_var: float, n_starts: int = 8) -> list[np.ndarray]:
    """Fixed log-space starts: shared lengthscale x noise level."""
    sf = math.log(min(max(y_var, SIGNAL_VAR_BOUNDS[0]), SIGNAL_VAR_BOUNDS[1]))
    starts = []
    for ls in (0.1, 0.3, 1.0, 3.0):
        for noise in (1e-6, 1e-2):
            starts.append(np.array([math.log(ls)] * d + [sf, math.log(noise)]))
    return starts[:n_starts]


def optimize_hyperparameters(X: np.ndarray, yc: np.ndarray, n_starts: int = 8, n_steps: int = 60) -> Kernel:
    """Multi-start coordinate ascent on the LML in log-hyperparameter space.

    One step moves one coordinate (cycling): try +delta and -delta, keep the
    better if it improves, otherwise halve that coordinate's delta.
    """
    n, d = X.shape
    diff = X[:, None, :] - X[None, :, :]
    sq = (diff * diff).reshape(n * n, d)
    lo, hi = _theta_bounds(d)
    best_theta, best_val = None, -math.inf
    for theta0 in start_grid(d, float(np.var(yc)), n_starts):
        theta = np.clip(theta0, lo, hi)
        val = log_marginal_likelihood(X, yc, _theta_to_kernel(theta, d), sq)
        delta = np.full(d + 2, 1.0)
        for step in range(n_steps):
            if np.all(delta < 1e-3):
                break
            j = step % (d + 2)
            best_local = None
            for sign in (1.0, -1.0):
                cand = theta.copy()
                cand[j] = min(max(cand[j] + sign * delta[j], lo[j]), hi[j])
                if cand[j] == theta[j]:
                    continue
                v = log_marginal_likelihood(X, yc, _theta_to_kernel(cand, d), sq)
                if v > val and (best_local is None or v > best_local[0]):
                    best_local = (v, cand)
            if best_local is None:
                delta[j] *= 0.5
            else:
                val, theta = best_local
        if val > best_val:
            best_val, best_theta = val, theta
    if best_theta is None:
        raise GPNumericalError("no hyperparameter start produced a finite likelihood")
    return _theta_to_kernel(best_theta, d)


def select_subset(y: np.ndarray, n_max: int, n_best: int, n_recent: int) -> np.ndarray:
    """Indices kept for fitting: best-by-value plus most recent, deduplicated, in original order."""
    n = len(y)
    if n <= n_max:
        return np.arange(n)
    order = np.lexsort((np.arange(n), -y))  # descending y, earlier first on ties
    keep = set(order[:n_best].tolist()) | set(range(max(0, n - n_recent), n))
    return np.array(sorted(keep))


def fit_gp(observations: Sequence[tuple[Sequence[float], float]], settings: GPSettings = GPSettings(),
           kernel: Optional[Kernel] = None) -> GpModel:
    """Fit a GP to (normalized input, fom) pairs given in chronological order.

    With ``kernel`` given, hyperparameter search is skipped.
    """
    if len(observations) < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {len(observations)}")
    X = np.array([np.asarray(z, dtype=float) for z, _ in observations])
    y = np.array([float(f) for _, f in observations])
    if not np.all(np.isfinite(y)):
        raise ValueError("all targets must be finite")
    idx = select_subset(y, settings.n_max, settings.n_best, settings.n_recent)
    X, y = X[idx], y[idx]
    if kernel is None:
        half = settings.hyper_subset // 2
        hidx = select_subset(y, settings.hyper_subset, half, settings.hyper_subset - half)
        yh = y[hidx]
        kernel = optimize_hyperparameters(X[hidx], yh - yh.mean(), settings.n_starts, settings.n_steps)
    return GpModel.build(X, y, kernel)


_INV_SQRT_2PI = 1.0 / math.sqrt(2 * math.pi)


def expected_improvement(mean, variance, f_best: float, xi: float = 0.0):
    """Closed-form EI for maximization. Vectorized over mean/variance."""
    mean = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    delta = mean - f_best - xi
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = np.where(sigma > 0, delta / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = delta * ndtr(u) + sigma * _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    ei = np.where(sigma > 0, ei, np.maximum(delta, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def select_diverse(Z: np.ndarray, scores: np.ndarray, q: int, min_dist: float,
                   tie_keys: Optional[np.ndarray] = None) -> list[int]:
    """Greedy pick by descending score under a pairwise-distance floor.

    The floor is halved until q points qualify.
    """
    if tie_keys is None:
        tie_keys = np.arange(len(scores))
    order = np.lexsort((tie_keys, -scores))
    dist = min_dist
    while True:
        chosen: list[int] = []
        for i in order:
            if dist > 0 and chosen:
                d = np.sqrt(np.sum((Z[chosen] - Z[i]) ** 2, axis=1))
                if np.min(d) < dist:
                    continue
            chosen.append(int(i))
            if len(chosen) == q:
                return chosen
        dist = dist / 2 if dist > 1e-12 else 0.0


def sample_region(region: Region, space: ParameterSpace, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in normalized coordinates inside a legal region."""
    zlo, zhi = region.unit_bounds(space)
    zlo = np.clip(zlo, 0.0, 1.0)
    zhi = np.clip(zhi, 0.0, 1.0)
    if np.any(zhi - zlo <= 0):
        bad = [space.names[i] for i in np.flatnonzero(zhi - zlo <= 0)]
        raise DegenerateRegionError(f"zero-width region on: {', '.join(bad)}")
    return zlo + rng.random((n, space.dim)) * (zhi - zlo)


def to_points(Z: np.ndarray, region: Region, space: ParameterSpace) -> list[DesignPoint]:
    """Denormalize and clamp into the region so containment holds exactly."""
    X = np.clip(space.from_unit(Z), region.lows, region.highs)
    return [DesignPoint(tuple(row.tolist())) for row in X]


def propose_batch(model: GpModel, region: Region, space: ParameterSpace, params: AcquisitionParams,
                  rng: np.random.Generator, q: Optional[int] = None,
                  tie_rng: Optional[np.random.Generator] = None) -> list[DesignPoint]:
    """Pick ``q`` points inside ``region`` by expected improvement over the incumbent."""
    q = params.q if q is None else q
    Z = sample_region(region, space, params.pool_size, rng)
    mean, var = model.predict(Z)
    f_best = float(np.max(model.train_targets)) + model.target_mean
    ei = expected_improvement(mean, var, f_best, params.xi)
    keys = (tie_rng or rng).random(len(Z))
    chosen = select_diverse(Z, ei, q, params.min_pairwise_distance, keys)
    return to_points(Z[chosen], region, space)
