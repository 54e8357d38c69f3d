"""Unconditional GP simulation and two-step conditional sampling of X | y.

All randomness flows through numpy's counter-based Philox bit generator so
that draws are reproducible and streams can be split deterministically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import CovMatrix, DistanceMetric, Euclidean, MaternParams, build_cov, chol_with_jitter
from .errors import DomainError


def rng_from_seed(seed) -> np.random.Generator:
    """Philox-backed generator; accepts ints, SeedSequences or Generators."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def split_seed(seed, n: int) -> list[np.random.SeedSequence]:
    """Deterministically split a master seed into n child streams."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


@dataclass
class SampleEnsemble:
    """Conditional field draws and their mean."""

    draws: np.ndarray          # (B, n)
    mean: np.ndarray           # (n,)
    seed: object = None

    def __post_init__(self):
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise DomainError("draws must be a (B, n) matrix with B >= 1")

    @property
    def B(self) -> int:
        return self.draws.shape[0]

    @property
    def n(self) -> int:
        return self.draws.shape[1]


def simulate_gp(locs, p: MaternParams, metric: DistanceMetric = Euclidean(), seed=0) -> np.ndarray:
    """One zero-mean draw with covariance Sigma (+ nugget on the diagonal)."""
    cov = build_cov(locs, p, metric, include_nugget=p.nugget > 0)
    L = chol_with_jitter(cov.entries, p.sigma2)
    rng = rng_from_seed(seed)
    return L @ rng.standard_normal(L.shape[0])


def conditional_moments(y, sigma: CovMatrix, nugget: float):
    """Exact conditional mean and covariance of X given y under Y = X + eps.

    mean = Sigma (Sigma + nugget I)^-1 y,
    cov  = Sigma - Sigma (Sigma + nugget I)^-1 Sigma,
    computed from a single factorization of (Sigma + nugget I).
    """
    y = np.asarray(y, dtype=float)
    S = sigma.entries
    n = S.shape[0]
    if y.shape != (n,):
        raise DomainError("y does not match covariance dimension")
    if nugget < 0:
        raise DomainError("nugget must be non-negative")
    if nugget == 0.0:
        return y.copy(), np.zeros((n, n))
    cf = cho_factor(S + nugget * np.eye(n), lower=True)
    mean = S @ cho_solve(cf, y)
    cov = S - S @ cho_solve(cf, S)
    return mean, cov


def conditional_sample(y, sigma: CovMatrix, nugget: float, B: int, seed=0) -> SampleEnsemble:
    """Draw B samples of X | y by the exact joint-then-transform construction.

    Each draw simulates (X, Y) jointly -- X ~ N(0, Sigma), Y = X + eps -- and
    applies the affine correction X + Sigma (Sigma + nugget I)^-1 (y - Y).
    Only the n x n system (Sigma + nugget I) is factorized.
    """
    y = np.asarray(y, dtype=float)
    if B < 1:
        raise DomainError("need at least one draw")
    S = sigma.entries
    n = S.shape[0]
    if y.shape != (n,):
        raise DomainError("y does not match covariance dimension")
    if nugget == 0.0:
        draws = np.tile(y, (B, 1))
        return SampleEnsemble(draws=draws, mean=y.copy(), seed=seed)
    L = chol_with_jitter(S, sigma.params.sigma2)
    cf = cho_factor(S + nugget * np.eye(n), lower=True)
    rng = rng_from_seed(seed)
    x = rng.standard_normal((B, n)) @ L.T
    y_sim = x + np.sqrt(nugget) * rng.standard_normal((B, n))
    draws = x + cho_solve(cf, (y - y_sim).T).T @ S
    return SampleEnsemble(draws=draws, mean=draws.mean(axis=0), seed=seed)
