"""Pointwise credibility classification of detail fields."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

HIGH, LOW, NULL = "high", "low", "null"


@dataclass(frozen=True)
class PWMap:
    """Per-location labels with the exceedance probabilities behind them."""

    labels: np.ndarray     # n-vector over {"high", "low", "null"}
    prob_pos: np.ndarray   # empirical P(detail > 0 | y)
    alpha: float


def pw_map(per_draw_detail: np.ndarray, alpha: float = 0.95) -> PWMap:
    """Classify each location as credibly high, low or null at level alpha.

    High where the empirical P(detail > 0) >= alpha, low where
    P(detail < 0) >= alpha, null otherwise.  Probabilities are plain
    proportions over the draws.
    """
    d = np.asarray(per_draw_detail, dtype=float)
    if d.ndim != 2 or d.shape[0] == 0:
        raise DomainError("need a (B, n) matrix of draws with B >= 1")
    if not 0.5 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0.5, 1), got {alpha}")
    B = d.shape[0]
    if B < 100:
        warnings.warn(f"only {B} draws; credibility probabilities will be coarse")
    prob_pos = (d > 0).mean(axis=0)
    prob_neg = (d < 0).mean(axis=0)
    labels = np.full(d.shape[1], NULL, dtype=object)
    labels[prob_pos >= alpha] = HIGH
    labels[prob_neg >= alpha] = LOW
    return PWMap(labels=labels, prob_pos=prob_pos, alpha=alpha)
