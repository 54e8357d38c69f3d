"""Correlation-based smoother, scale derivative, scale selection, decomposition.

The smoother is S_lambda = R (R + lambda I)^-1 built from a Matern smoothing
correlation matrix R; lambda = 0 reproduces the field, lambda = inf maps to
zero.  Details are differences of consecutive smooths and sum back to the
field exactly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .covariance import DistanceMetric, Euclidean, build_corr
from .errors import DomainError
from .sampling import SampleEnsemble

DEFAULT_GRID = np.logspace(-3.0, 3.0, 64)
PLATEAU_TOL = 1e-12
# last-detail smoothness above this suggests the smoothing nu was set too high
NU_WARN_THRESHOLD = 10.0


@dataclass
class SmootherSpec:
    """Smoothing correlation matrix with a cached spectral decomposition.

    With R = U diag(e) U', every smoother in the family shares the
    eigenvectors: S_lambda = U diag(e / (e + lambda)) U', so sweeping a
    lambda grid costs one eigendecomposition instead of one factorization
    per grid point.
    """

    rho_s: float
    nu_s: float
    metric: DistanceMetric
    corr: np.ndarray
    _eig: tuple | None = field(default=None, repr=False)

    def eig(self):
        if self._eig is None:
            e, U = np.linalg.eigh(self.corr)
            self._eig = (e, U)
        return self._eig


def make_smoother(locs, rho_s: float, nu_s: float = 0.5,
                  metric: DistanceMetric = Euclidean()) -> SmootherSpec:
    """Build the smoothing correlation matrix R on the given locations."""
    corr = build_corr(locs, rho_s, nu_s, metric)
    return SmootherSpec(rho_s=rho_s, nu_s=nu_s, metric=metric, corr=corr.entries)


def smooth(spec: SmootherSpec, lam: float, x: np.ndarray) -> np.ndarray:
    """Apply S_lambda = R (R + lambda I)^-1 to a vector or (n, B) matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != spec.corr.shape[0]:
        raise DomainError("field length does not match smoother correlation")
    if lam == 0.0:
        return x.copy()
    if np.isinf(lam):
        return np.zeros_like(x)
    if lam < 0:
        raise DomainError("smoothing scale must be non-negative")
    e, U = spec.eig()
    w = e / (e + lam)
    return U @ (w[:, None] * (U.T @ x) if x.ndim == 2 else w * (U.T @ x))


def scale_derivative(spec: SmootherSpec, lam: float, x: np.ndarray) -> np.ndarray:
    """d(S_lambda x)/d(log lambda) = -lambda R (R + lambda I)^-2 x."""
    if not (np.isfinite(lam) and lam > 0):
        raise DomainError("scale derivative needs a finite positive lambda")
    x = np.asarray(x, dtype=float)
    e, U = spec.eig()
    w = -lam * e / (e + lam) ** 2
    return U @ (w[:, None] * (U.T @ x) if x.ndim == 2 else w * (U.T @ x))


@dataclass(frozen=True)
class DerivativeCurve:
    lambdas: np.ndarray
    values: np.ndarray
    norm_kind: str  # "max" or "euclid"


def derivative_curve(spec: SmootherSpec, x: np.ndarray, grid=None,
                     norm_kind: str = "max") -> DerivativeCurve:
    """Norm of the scale derivative over a log-spaced lambda grid."""
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 16 or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be strictly increasing with >= 16 points")
    if norm_kind not in ("max", "euclid"):
        raise DomainError(f"unknown norm {norm_kind!r}")
    ord_ = np.inf if norm_kind == "max" else 2
    vals = np.array([np.linalg.norm(scale_derivative(spec, lam, x), ord=ord_)
                     for lam in grid])
    return DerivativeCurve(lambdas=grid, values=vals, norm_kind=norm_kind)


@dataclass(frozen=True)
class ScaleSet:
    """Ordered smoothing scales 0 = lambda_1 < ... < lambda_L = inf."""

    lambdas: tuple
    curve: DerivativeCurve | None = None

    def __post_init__(self):
        lams = self.lambdas
        if len(lams) < 2 or lams[0] != 0.0 or not np.isinf(lams[-1]):
            raise DomainError("scales must start at 0 and end at inf")
        if np.any(np.diff(lams) <= 0):
            raise DomainError("scales must be strictly increasing")

    @property
    def interior(self) -> tuple:
        return self.lambdas[1:-1]

    @property
    def L(self) -> int:
        return len(self.lambdas)


def _local_minima(values: np.ndarray, tol: float = PLATEAU_TOL) -> list[int]:
    """Indices of strict local minima; plateaus count once, at their left edge."""
    idx = []
    m = len(values)
    i = 1
    while i < m - 1:
        if values[i] < values[i - 1] - tol:
            j = i
            while j + 1 < m and abs(values[j + 1] - values[i]) <= tol:
                j += 1
            if j < m - 1 and values[j + 1] > values[i] + tol:
                idx.append(i)
            i = j + 1
        else:
            i += 1
    return idx


def prominence(values: np.ndarray, i: int) -> float:
    """Relative prominence of the local minimum at ``i``: the smaller of the
    two rises (as a fraction of the minimum) the curve makes on either side
    before dropping below the minimum again."""
    v = values[i]
    rises = []
    for rng in (range(i - 1, -1, -1), range(i + 1, len(values))):
        barrier = v
        for j in rng:
            if values[j] < v:
                break
            barrier = max(barrier, values[j])
        rises.append((barrier - v) / v if v > 0 else np.inf)
    return float(min(rises))


def select_scales(curve: DerivativeCurve, min_prominence: float = 0.01) -> ScaleSet:
    """Interior scales at the local minima of the derivative-norm curve.

    The maximum norm switches argmax locations as lambda varies, which puts
    sub-percent wiggles on the curve; minima whose relative prominence is
    below ``min_prominence`` are treated as such artifacts and dropped.  Pass
    0 to keep every strict three-point minimum.
    """
    minima = _local_minima(curve.values)
    if min_prominence > 0.0:
        minima = [i for i in minima if prominence(curve.values, i) >= min_prominence]
    interior = tuple(float(curve.lambdas[i]) for i in minima)
    return ScaleSet(lambdas=(0.0, *interior, np.inf), curve=curve)


@dataclass
class Decomposition:
    """Per-draw and posterior-mean details z_1 ... z_{L-1}."""

    details: list[np.ndarray]       # L-1 mean detail vectors
    per_draw: np.ndarray            # (B, L-1, n)
    scales: ScaleSet

    @property
    def L(self) -> int:
        return len(self.details) + 1


def decompose(spec: SmootherSpec, scales: ScaleSet,
              draws: SampleEnsemble | np.ndarray) -> Decomposition:
    """Split each draw into details z_l = (S_{lambda_l} - S_{lambda_{l+1}}) x.

    The reconstruction identity sum_l z_l = x holds per draw by telescoping.
    """
    X = draws.draws if isinstance(draws, SampleEnsemble) else np.atleast_2d(np.asarray(draws, float))
    n = spec.corr.shape[0]
    if X.shape[1] != n:
        raise DomainError("draws do not match smoother correlation dimension")
    smooths = [smooth(spec, lam, X.T) for lam in scales.lambdas]
    per_draw = np.stack([(smooths[k] - smooths[k + 1]).T for k in range(scales.L - 1)], axis=1)
    details = [per_draw[:, k, :].mean(axis=0) for k in range(scales.L - 1)]
    return Decomposition(details=details, per_draw=per_draw, scales=scales)


def check_last_detail_smoothness(nu_hat: float) -> None:
    """Warn when the last detail's fitted smoothness blows up.

    A very large estimate indicates the smoothing-correlation smoothness was
    chosen too large.
    """
    if nu_hat > NU_WARN_THRESHOLD:
        warnings.warn(
            f"fitted smoothness of the last detail is {nu_hat:.2f} (> "
            f"{NU_WARN_THRESHOLD:g}); the smoothing-correlation smoothness "
            "is likely set too high", stacklevel=2)
