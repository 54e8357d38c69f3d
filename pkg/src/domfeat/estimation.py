"""Gaussian log-likelihood and maximum-likelihood fitting of Matern parameters.

Free parameters are optimized on the log scale, which enforces positivity and
makes the Wald intervals symmetric where they are computed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from .covariance import (CovMatrix, DistanceMetric, Euclidean, MaternParams, build_cov,
                         chol_with_jitter, matern_cov, pairwise_distances)
from .errors import DomainError, NumericError

# forward-difference step for gradients of the log-likelihood in log-parameter space
FD_EPS = 1.4901161193847656e-08


class CorrCache:
    """Small cache of correlation matrices keyed on (rho, nu).

    Finite-difference perturbations of sigma2 and the nugget leave the
    correlation untouched, so caching avoids recomputing Bessel functions for
    most evaluations inside a fit.
    """

    def __init__(self, dists, maxsize=8):
        self.dists = dists
        self.maxsize = maxsize
        self._store = {}

    def corr(self, rho, nu):
        key = (rho, nu)
        if key not in self._store:
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[key] = matern_cov(self.dists, MaternParams(rho, 1.0, nu))
        return self._store[key]

    def cov(self, p: MaternParams):
        S = p.sigma2 * self.corr(p.rho, p.nu)
        S[np.diag_indices_from(S)] += p.nugget
        return S


def _fd_grad(fn, theta, f0, eps=FD_EPS):
    g = np.empty(len(theta))
    for i in range(len(theta)):
        tp = np.array(theta, dtype=float)
        tp[i] += eps
        g[i] = (fn(tp) - f0) / eps
    return g

PARAM_NAMES = ("rho", "sigma2", "nu", "nugget")

_LOG2PI = math.log(2.0 * math.pi)


def gaussian_loglik(y, mean, cov) -> float:
    """Multivariate normal log density via a single Cholesky factorization."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float) if np.ndim(mean) else np.full_like(y, float(mean))
    entries = cov.entries if isinstance(cov, CovMatrix) else np.asarray(cov, dtype=float)
    n = y.shape[0]
    if mean.shape != y.shape or entries.shape != (n, n):
        raise DomainError("dimension mismatch in gaussian_loglik")
    sigma2 = cov.params.sigma2 if isinstance(cov, CovMatrix) else float(np.max(np.diag(entries)))
    L = chol_with_jitter(entries, sigma2)
    r = solve_triangular(L, y - mean, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * n * _LOG2PI - 0.5 * logdet - 0.5 * float(r @ r)


@dataclass
class MLFit:
    """Result of a maximum-likelihood covariance fit."""

    params: MaternParams
    loglik: float
    hessian: np.ndarray | None      # over free log-parameters, order of free_names
    free_names: tuple[str, ...]
    wald: dict[str, tuple[float, float]]
    converged: bool
    iterations: int
    level: float = 0.95


def _log_params(p: MaternParams, free):
    vals = {"rho": p.rho, "sigma2": p.sigma2, "nu": p.nu, "nugget": p.nugget}
    return np.array([math.log(max(vals[k], 1e-300)) for k in free])


def _with_logs(p: MaternParams, free, theta) -> MaternParams:
    kw = {}
    for name, t in zip(free, theta):
        kw[name] = math.exp(min(max(t, -700.0), 700.0))
    return p.replace(**kw)


def _fd_hessian(fn, theta, step=1e-4):
    """Central finite-difference Hessian of a scalar function."""
    k = len(theta)
    h = np.full(k, step)
    hess = np.zeros((k, k))
    f0 = fn(theta)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        for j in range(i, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            if i == j:
                fpp = fn(theta + ei)
                fmm = fn(theta - ei)
                hess[i, i] = (fpp - 2.0 * f0 + fmm) / h[i] ** 2
            else:
                fpp = fn(theta + ei + ej)
                fpm = fn(theta + ei - ej)
                fmp = fn(theta - ei + ej)
                fmm = fn(theta - ei - ej)
                hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return hess


def default_init(y, locs, metric: DistanceMetric = Euclidean()) -> MaternParams:
    """Standard starting point: median pairwise distance, split variance, nu=1."""
    from .covariance import pairwise_distances

    d = pairwise_distances(locs, metric)
    med = float(np.median(d[np.triu_indices_from(d, 1)]))
    v = float(np.var(np.asarray(y, dtype=float)))
    v = max(v, 1e-12)
    return MaternParams(rho=max(med, 1e-12), sigma2=v / 2.0, nu=1.0, nugget=v / 2.0)


def fit_ml(y, locs, metric: DistanceMetric = Euclidean(), init: MaternParams | None = None,
           fix: frozenset[str] | set[str] = frozenset(), level: float = 0.95,
           max_iter: int = 500) -> MLFit:
    """Maximize the Gaussian likelihood over free Matern parameters.

    Optimization runs in log-parameter space with L-BFGS-B and numerical
    gradients; the Hessian at the optimum is computed by central finite
    differences and used for Wald intervals at the requested level.
    """
    y = np.asarray(y, dtype=float)
    locs = np.asarray(locs, dtype=float)
    if y.shape[0] != locs.shape[0]:
        raise DomainError("y and locations disagree in length")
    if init is None:
        init = default_init(y, locs, metric)
    fix = frozenset(fix)
    unknown = fix - set(PARAM_NAMES)
    if unknown:
        raise DomainError(f"unknown parameters in fix: {sorted(unknown)}")
    free = tuple(n for n in PARAM_NAMES if n not in fix)
    # duplicate-location screening happens once; evaluations reuse the distances
    build_cov(locs, init, metric)
    cache = CorrCache(pairwise_distances(locs, metric))
    n = y.shape[0]

    def loglik_at(theta):
        p = _with_logs(init, free, theta)
        try:
            L = chol_with_jitter(cache.cov(p), p.sigma2)
        except NumericError:
            return -np.inf
        r = solve_triangular(L, y, lower=True)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        return -0.5 * n * _LOG2PI - 0.5 * logdet - 0.5 * float(r @ r)

    if not free:
        ll = loglik_at(np.empty(0))
        return MLFit(params=init, loglik=ll, hessian=None, free_names=(),
                     wald={n: _degenerate_interval(init, n) for n in PARAM_NAMES},
                     converged=True, iterations=0, level=level)

    def neg(theta):
        ll = loglik_at(theta)
        return 1e10 if not np.isfinite(ll) else -ll

    def neg_with_grad(theta):
        f0 = neg(theta)
        return f0, _fd_grad(neg, theta, f0)

    theta0 = _log_params(init, free)
    res = minimize(neg_with_grad, theta0, method="L-BFGS-B", jac=True,
                   options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-4})
    theta_hat = res.x
    params = _with_logs(init, free, theta_hat)
    loglik = loglik_at(theta_hat)
    hess = _fd_hessian(loglik_at, theta_hat)
    grad_ok = res.jac is not None and float(np.max(np.abs(res.jac))) < 1e-3
    fit = MLFit(params=params, loglik=loglik, hessian=hess, free_names=free,
                wald={}, converged=bool(res.success or grad_ok),
                iterations=int(res.nit), level=level)
    try:
        fit.wald = wald_intervals(fit, level)
    except (NumericError, DomainError):
        fit.wald = {}
    return fit


def _degenerate_interval(p: MaternParams, name):
    v = {"rho": p.rho, "sigma2": p.sigma2, "nu": p.nu, "nugget": p.nugget}[name]
    return (v, v)


def wald_intervals(fit: MLFit, level: float = 0.95) -> dict[str, tuple[float, float]]:
    """Per-parameter Wald intervals, symmetric on the log scale.

    Fixed parameters get degenerate intervals at their values.
    """
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must be in (0, 1), got {level}")
    out = {n: _degenerate_interval(fit.params, n) for n in PARAM_NAMES if n not in fit.free_names}
    if not fit.free_names:
        return out
    if fit.hessian is None:
        raise DomainError("fit has no Hessian")
    eig = np.linalg.eigvalsh(fit.hessian)
    if np.any(eig >= 0):
        raise NumericError(
            "Hessian of the log-likelihood is not negative definite; "
            "consider profiling or refitting")
    cov = np.linalg.inv(-fit.hessian)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    z = norm.ppf(0.5 * (1.0 + level))
    est = _log_params(fit.params, fit.free_names)
    for i, name in enumerate(fit.free_names):
        out[name] = (math.exp(est[i] - z * se[i]), math.exp(est[i] + z * se[i]))
    return out
