"""Matern covariance function, distance metrics and dense covariance matrices.

The Matern family is parametrized by the effective range ``rho`` (distance at
which the correlation drops to roughly 0.13), the partial sill ``sigma2``, the
smoothness ``nu`` and an optional nugget variance added to the diagonal only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky
from scipy.special import kv as _kv

from .errors import DomainError, NumericError

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class MaternParams:
    """Covariance parameters: effective range, partial sill, smoothness, nugget."""

    rho: float
    sigma2: float
    nu: float
    nugget: float = 0.0

    def __post_init__(self):
        vals = (self.rho, self.sigma2, self.nu, self.nugget)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite covariance parameters: {self}")
        if self.rho <= 0 or self.sigma2 <= 0 or self.nu <= 0 or self.nugget < 0:
            raise DomainError(f"covariance parameters out of range: {self}")

    def replace(self, **kw) -> "MaternParams":
        d = {"rho": self.rho, "sigma2": self.sigma2, "nu": self.nu, "nugget": self.nugget}
        d.update(kw)
        return MaternParams(**d)


@dataclass(frozen=True)
class Euclidean:
    """Plain Euclidean distance in the coordinate units of the locations."""


@dataclass(frozen=True)
class GreatCircle:
    """Haversine great-circle distance; locations are (lat, lon) in degrees."""

    radius: float = EARTH_RADIUS_KM


DistanceMetric = Euclidean | GreatCircle


def distance(a, b, metric: DistanceMetric = Euclidean()) -> float:
    """Distance between two locations under the given metric."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(pairwise_distances(np.vstack([a, b]), metric)[0, 1])


def _check_latlon(locs):
    lat, lon = locs[:, 0], locs[:, 1]
    if np.any(np.abs(lat) > 90) or np.any(np.abs(lon) > 180):
        raise DomainError("latitude must lie in [-90, 90], longitude in [-180, 180]")


def pairwise_distances(locs, metric: DistanceMetric = Euclidean()) -> np.ndarray:
    """Dense symmetric distance matrix for an (n, 2) location array."""
    locs = np.asarray(locs, dtype=float)
    if locs.ndim != 2 or locs.shape[1] != 2:
        raise DomainError(f"locations must be (n, 2), got {locs.shape}")
    if not np.all(np.isfinite(locs)):
        raise DomainError("non-finite coordinates")
    if isinstance(metric, Euclidean):
        diff = locs[:, None, :] - locs[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
    elif isinstance(metric, GreatCircle):
        _check_latlon(locs)
        lat = np.radians(locs[:, 0])
        lon = np.radians(locs[:, 1])
        dlat = lat[:, None] - lat[None, :]
        dlon = lon[:, None] - lon[None, :]
        h = np.sin(dlat / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dlon / 2) ** 2
        d = 2.0 * metric.radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    else:
        raise DomainError(f"unknown distance metric {metric!r}")
    np.fill_diagonal(d, 0.0)
    return d


def matern_cov(d, p: MaternParams):
    """Matern covariance at lag(s) ``d``; exact ``sigma2`` at d=0, nugget excluded."""
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)):
        raise DomainError("non-finite distance")
    if np.any(d < 0):
        raise DomainError("negative distance")
    # computed in log space: 2^(nu-1) Gamma(nu) overflows for large nu
    scale = p.sigma2 * math.exp(-(p.nu - 1.0) * math.log(2.0) - math.lgamma(p.nu))

    def cov_at_z(z):
        with np.errstate(invalid="ignore", over="ignore"):
            out = scale * np.power(z, p.nu) * _kv(p.nu, z)
        # z -> 0 and z -> inf both produce nan/0*inf; the limits are sigma2 and 0
        return np.nan_to_num(out, nan=0.0, posinf=0.0, neginf=0.0)

    def eval_at(dd):
        z = (math.sqrt(8.0 * p.nu) / p.rho) * dd
        # the correlation is monotone in z, so once a probe shows it has
        # underflowed the Bessel evaluation can be skipped for the far tail;
        # for short ranges on a wide domain that is most of the pairs
        if z.ndim and z.size > 2048 and float(z.max()) > 50.0:
            probe = np.linspace(50.0, float(z.max()), 64)
            tiny = cov_at_z(probe) < 1e-22 * p.sigma2
            if tiny.any():
                out = np.zeros_like(z)
                near = z < probe[int(np.argmax(tiny))]
                out[near] = cov_at_z(z[near])
                return np.where(dd == 0.0, p.sigma2, out)
        return np.where(dd == 0.0, p.sigma2, cov_at_z(z))

    # symmetric matrices (the common case) only need the upper triangle
    if d.ndim == 2 and d.shape[0] == d.shape[1] and np.array_equal(d, d.T):
        iu = np.triu_indices(d.shape[0])
        vals = eval_at(d[iu])
        out = np.empty_like(d)
        out[iu] = vals
        out.T[iu] = vals
        return out
    out = eval_at(d)
    if d.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class CovMatrix:
    """Dense symmetric covariance (or correlation) matrix with its provenance."""

    entries: np.ndarray
    params: MaternParams
    metric: DistanceMetric
    nugget_included: bool = False

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def build_cov(locs, p: MaternParams, metric: DistanceMetric = Euclidean(),
              include_nugget: bool = False) -> CovMatrix:
    """Dense Matern covariance matrix over pairwise distances.

    Duplicate locations are rejected: coincident points break the conditional
    independence of the noise model.
    """
    d = pairwise_distances(locs, metric)
    n = d.shape[0]
    if n > 1:
        off = d + np.diag(np.full(n, np.inf))
        dup = np.argwhere(off == 0.0)
        if dup.size:
            i, j = dup[0]
            raise DomainError(f"duplicate locations at rows {i} and {j}")
    entries = matern_cov(d, p)
    if include_nugget:
        entries = entries + p.nugget * np.eye(n)
    return CovMatrix(entries=entries, params=p, metric=metric, nugget_included=include_nugget)


def build_corr(locs, rho: float, nu: float, metric: DistanceMetric = Euclidean()) -> CovMatrix:
    """Unit-diagonal Matern correlation matrix (sigma2 = 1, no nugget)."""
    return build_cov(locs, MaternParams(rho=rho, sigma2=1.0, nu=nu, nugget=0.0), metric)


def chol_with_jitter(mat: np.ndarray, sigma2: float):
    """Lower Cholesky factor, retrying with escalating diagonal jitter.

    Jitter starts at 1e-10 * sigma2 and escalates by factors of 10 up to
    1e-6 * sigma2 before giving up.
    """
    if not np.all(np.isfinite(mat)):
        raise NumericError("non-finite covariance matrix")
    try:
        return cholesky(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * sigma2
    eye = np.eye(mat.shape[0])
    while jitter <= 1e-6 * sigma2 * (1 + 1e-12):
        try:
            return cholesky(mat + jitter * eye, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericError("Cholesky factorization failed after jitter escalation")
