"""Scale-dependent attribute models for details.

Each detail can be modeled as a pure spatial Gaussian process or as linear
effects of scale-decomposed predictors plus a spatial residual process.  The
linear coefficients are profiled out by generalized least squares inside the
covariance-parameter likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from .covariance import (DistanceMetric, Euclidean, MaternParams, build_cov, chol_with_jitter,
                         matern_cov, pairwise_distances)
from .errors import DomainError, NumericError
from .estimation import CorrCache, PARAM_NAMES, _fd_grad, _fd_hessian, _log_params, _with_logs
from .scalespace import ScaleSet, SmootherSpec, smooth

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DesignMatrix:
    """Named predictor columns (including intercept) for one detail."""

    names: tuple[str, ...]
    matrix: np.ndarray       # (n, k)
    scale_index: int

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[1] != len(self.names):
            raise DomainError("design matrix shape does not match column names")
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[-1] <= 1e-8 * sv[0]:
            raise DomainError(f"design matrix for detail {self.scale_index} is rank deficient")

    @property
    def k(self) -> int:
        return self.matrix.shape[1]


def decompose_predictors(names, columns: np.ndarray, spec: SmootherSpec,
                         scales: ScaleSet) -> list[DesignMatrix]:
    """Scale-decompose predictor columns into one design matrix per detail.

    Columns are smoothed and differenced exactly like the field; the intercept
    column (detected as constant) passes through undecomposed in every design
    matrix.  Ordered categorical predictors must already be encoded as integer
    levels.
    """
    W = np.asarray(columns, dtype=float)
    names = tuple(names)
    if W.ndim != 2 or W.shape[1] != len(names):
        raise DomainError("predictor table shape does not match names")
    const = np.array([np.ptp(W[:, j]) == 0.0 for j in range(W.shape[1])])
    smooths = [smooth(spec, lam, W) for lam in scales.lambdas]
    out = []
    for ell in range(scales.L - 1):
        M = smooths[ell] - smooths[ell + 1]
        M[:, const] = W[:, const]
        out.append(DesignMatrix(names=names, matrix=M, scale_index=ell))
    return out


@dataclass
class AttributeFit:
    """Joint ML fit of linear coefficients and spatial parameters for a detail."""

    beta: np.ndarray | None
    beta_names: tuple[str, ...]
    spatial: MaternParams
    loglik: float
    hessian: np.ndarray | None       # over (beta, free log spatial params)
    free_names: tuple[str, ...]      # free spatial parameter names
    wald: dict[str, tuple[float, float]]
    fixed_effect_variance: float
    converged: bool
    iterations: int


def _gls_beta(cf, W, z):
    """Solve (W' Sigma^-1 W) beta = W' Sigma^-1 z for given factorization."""
    SiW = cho_solve(cf, W)
    A = W.T @ SiW
    b = SiW.T @ z
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise NumericError("GLS normal equations are singular") from e


def _detail_loglik(z, W, dists, theta_params: MaternParams, cache: CorrCache | None = None):
    """Profiled Gaussian log-likelihood of one detail; returns (ll, beta)."""
    n = z.shape[0]
    if cache is not None:
        S = cache.cov(theta_params)
    else:
        S = matern_cov(dists, theta_params) + theta_params.nugget * np.eye(n)
    L = chol_with_jitter(S, theta_params.sigma2)
    cf = (L, True)
    if W is not None:
        beta = _gls_beta(cf, W, z)
        resid = z - W @ beta
    else:
        beta = None
        resid = z
    r = solve_triangular(L, resid, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    ll = -0.5 * n * _LOG2PI - 0.5 * logdet - 0.5 * float(r @ r)
    return ll, beta


def fit_detail(z, W: DesignMatrix | None, locs, metric: DistanceMetric = Euclidean(),
               init: MaternParams | None = None, fix: dict | None = None,
               level: float = 0.95, max_iter: int = 500,
               compute_hessian: bool = True) -> AttributeFit:
    """Jointly estimate linear and spatial attributes for one detail by ML.

    ``fix`` maps spatial parameter names to pinned values.  The Hessian is
    taken over (beta, free log spatial parameters) jointly at the optimum,
    with beta at its profiled GLS value.
    """
    z = np.asarray(z, dtype=float)
    locs = np.asarray(locs, dtype=float)
    dists = pairwise_distances(locs, metric)
    fix = dict(fix or {})
    unknown = set(fix) - set(PARAM_NAMES)
    if unknown:
        raise DomainError(f"unknown spatial parameters in fix: {sorted(unknown)}")
    if init is None:
        v = max(float(np.var(z)), 1e-10)
        med = float(np.median(dists[np.triu_indices_from(dists, 1)]))
        init = MaternParams(rho=max(med, 1e-12), sigma2=v / 2.0, nu=1.0,
                            nugget=max(v / 2.0, 1e-10))
    init = init.replace(**fix)
    free = tuple(n for n in PARAM_NAMES if n not in fix)
    Wm = W.matrix if W is not None else None
    cache = CorrCache(dists)

    def profiled(theta):
        p = _with_logs(init, free, theta)
        try:
            return _detail_loglik(z, Wm, dists, p, cache)
        except NumericError:
            return -np.inf, None

    if free:
        def neg(theta):
            ll, _ = profiled(theta)
            return 1e10 if not np.isfinite(ll) else -ll

        def neg_with_grad(theta):
            f0 = neg(theta)
            return f0, _fd_grad(neg, theta, f0)

        res = minimize(neg_with_grad, _log_params(init, free), method="L-BFGS-B",
                       jac=True,
                       options={"maxiter": max_iter, "ftol": 1e-9, "gtol": 1e-4})
        theta_hat = res.x
        converged = bool(res.success or (res.jac is not None
                                         and float(np.max(np.abs(res.jac))) < 1e-3))
        iterations = int(res.nit)
    else:
        theta_hat = np.empty(0)
        converged, iterations = True, 0
    params = _with_logs(init, free, theta_hat)
    loglik, beta = profiled(theta_hat)

    # joint Hessian over (beta, free log spatial params) at the optimum
    k = 0 if beta is None else beta.shape[0]

    def joint_loglik(v):
        p = _with_logs(init, free, v[k:])
        n = z.shape[0]
        L = chol_with_jitter(cache.cov(p), p.sigma2)
        resid = z - Wm @ v[:k] if k else z
        r = solve_triangular(L, resid, lower=True)
        return (-0.5 * n * _LOG2PI - float(np.sum(np.log(np.diag(L))))
                - 0.5 * float(r @ r))

    v_hat = np.concatenate([beta if k else np.empty(0), theta_hat])
    hessian = _fd_hessian(joint_loglik, v_hat) if (compute_hessian and v_hat.size) else None

    beta_names = W.names if W is not None else ()
    wald = _attribute_wald(beta, beta_names, params, free, hessian, level)
    fev = float(np.var(Wm @ beta)) if k else 0.0
    return AttributeFit(beta=beta, beta_names=beta_names, spatial=params,
                        loglik=loglik, hessian=hessian, free_names=free, wald=wald,
                        fixed_effect_variance=fev, converged=converged,
                        iterations=iterations)


def _attribute_wald(beta, beta_names, params: MaternParams, free, hessian, level):
    """Wald intervals: linear scale for beta, log scale for spatial parameters."""
    out = {}
    vals = {"rho": params.rho, "sigma2": params.sigma2, "nu": params.nu,
            "nugget": params.nugget}
    for name in PARAM_NAMES:
        if name not in free:
            out[name] = (vals[name], vals[name])
    if hessian is None:
        return out
    eig = np.linalg.eigvalsh(hessian)
    if np.any(eig >= 0):
        return out  # indefinite Hessian: no intervals for free parameters
    cov = np.linalg.inv(-hessian)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    zq = norm.ppf(0.5 * (1.0 + level))
    k = 0 if beta is None else beta.shape[0]
    for i in range(k):
        out[f"beta_{beta_names[i]}"] = (beta[i] - zq * se[i], beta[i] + zq * se[i])
    log_est = _log_params(params, free)
    for i, name in enumerate(free):
        s = se[k + i]
        out[name] = (math.exp(log_est[i] - zq * s), math.exp(log_est[i] + zq * s))
    return out


def predict_detail(fit: AttributeFit, W_new, locs_new, z_train, W_train,
                   locs_train, metric: DistanceMetric = Euclidean()):
    """Universal-kriging predictive mean and sd of the detail at new locations.

    Conditioning data are the training detail values (and design matrix when
    the fit has linear effects).  The predictive variance includes the nugget,
    since observed details carry the location-independent component.
    """
    if not fit.converged:
        raise DomainError("cannot predict from a non-converged fit")
    p = fit.spatial
    z_train = np.asarray(z_train, dtype=float)
    locs_train = np.asarray(locs_train, dtype=float)
    locs_new = np.asarray(locs_new, dtype=float)
    n, m = locs_train.shape[0], locs_new.shape[0]
    S = matern_cov(pairwise_distances(locs_train, metric), p) + p.nugget * np.eye(n)
    cross = _cross_distances(locs_new, locs_train, metric)
    Kc = matern_cov(cross, p)                       # (m, n), nugget uncorrelated
    L = chol_with_jitter(S, p.sigma2)
    cf = (L, True)
    if fit.beta is not None:
        trend_train = W_train.matrix @ fit.beta
        trend_new = np.asarray(W_new, dtype=float) @ fit.beta
    else:
        trend_train = np.zeros(n)
        trend_new = np.zeros(m)
    resid = z_train - trend_train
    mean = trend_new + Kc @ cho_solve(cf, resid)
    half = solve_triangular(L, Kc.T, lower=True)
    var = (p.sigma2 + p.nugget) - np.sum(half * half, axis=0)
    sd = np.sqrt(np.clip(var, 0.0, None))
    return mean, sd


def _cross_distances(a, b, metric: DistanceMetric):
    stacked = pairwise_distances(np.vstack([a, b]), metric)
    return stacked[: a.shape[0], a.shape[0]:]
