"""Two-process simulation study and smoothing-parameter stability sweep.

A composed field (short-range rough process plus longer-range smooth process)
on the unit square is decomposed under a grid of smoother settings; the
selected scale and the per-detail ML estimates show where the smoother tuning
stops mattering.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import Euclidean, MaternParams, pairwise_distances
from .errors import DomainError
from .sampling import SampleEnsemble, rng_from_seed, simulate_gp, split_seed
from .scalespace import (ScaleSet, check_last_detail_smoothness, decompose,
                         derivative_curve, make_smoother, prominence,
                         select_scales)
from .attributes import fit_detail

PROCESS_1 = MaternParams(rho=0.05, sigma2=1.0, nu=0.8)
PROCESS_2 = MaternParams(rho=0.2, sigma2=1.0, nu=2.2)
DEFAULT_RHO_GRID = (0.05, 0.1, 0.2, 0.4, 0.8)
DEFAULT_NU_GRID = (0.5, 1.0, 2.0, 4.0)


def simulate_composition(n: int, seed=0):
    """Uniform locations on the unit square and the sum of the two processes."""
    if n < 64:
        raise DomainError("need at least 64 locations")
    ss_locs, ss_f1, ss_f2 = split_seed(seed, 3)
    locs = rng_from_seed(ss_locs).uniform(size=(n, 2))
    field = simulate_gp(locs, PROCESS_1, Euclidean(), ss_f1) \
        + simulate_gp(locs, PROCESS_2, Euclidean(), ss_f2)
    return locs, field


@dataclass
class SweepRecord:
    rho_s: float
    nu_s: float
    curve_lambdas: np.ndarray
    curve_values: np.ndarray
    selected: tuple
    z1_params: MaternParams | None
    z2_params: MaternParams | None
    failed: bool = False
    error: str = ""


@dataclass
class SweepResult:
    n: int
    seed: object
    records: list[SweepRecord]

    def to_rows(self):
        """Tidy (setting, kind, key, value) rows for CSV export."""
        rows = []
        for r in self.records:
            tag = f"rho_s={r.rho_s:g},nu_s={r.nu_s:g}"
            if r.failed:
                rows.append((tag, "error", "", r.error))
                continue
            for lam, v in zip(r.curve_lambdas, r.curve_values):
                rows.append((tag, "curve", f"{lam:.10g}", f"{v:.10g}"))
            for i, lam in enumerate(r.selected):
                rows.append((tag, "selected_lambda", str(i + 1), f"{lam:.10g}"))
            for name, p in (("z1", r.z1_params), ("z2", r.z2_params)):
                if p is None:
                    continue
                rows.append((tag, f"{name}_rho", "", f"{p.rho:.10g}"))
                rows.append((tag, f"{name}_sigma2", "", f"{p.sigma2:.10g}"))
                rows.append((tag, f"{name}_nu", "", f"{p.nu:.10g}"))
                rows.append((tag, f"{name}_nugget", "", f"{p.nugget:.10g}"))
        return rows


def _correlogram_init(z, dists) -> MaternParams:
    """Moment-based starting point: effective range from the first distance
    bin where the empirical correlation of ``z`` drops below 0.13."""
    v = max(float(np.var(z)), 1e-10)
    iu = np.triu_indices_from(dists, 1)
    d = dists[iu]
    zc = z - z.mean()
    prod = (zc[:, None] * zc[None, :])[iu] / v
    edges = np.quantile(d, np.linspace(0.0, 1.0, 41))
    rho0 = float(np.median(d))
    for a, b in zip(edges[:-1], edges[1:]):
        m = (d >= a) & (d < b)
        if m.sum() >= 30 and prod[m].mean() < 0.13:
            rho0 = 0.5 * (a + b)
            break
    return MaternParams(rho=max(rho0, 1e-6), sigma2=0.99 * v, nu=1.0,
                        nugget=max(0.01 * v, 1e-10))


def analyze_setting(locs, field, rho_s: float, nu_s: float,
                    fit_details: bool = True) -> SweepRecord:
    """Curve, scale selection and optional per-detail fits for one setting.

    A planar linear trend is removed first (the real-data pipeline likewise
    detrends before decomposing): the realization's mean and large-scale tilt
    load on the top eigenmodes of the smoothing correlation and otherwise add
    a spurious long-scale bump to the derivative curve.  Because the
    composition has exactly two processes, a single split scale is kept; when
    the curve offers several prominent minima the most pronounced one wins.
    """
    X = np.column_stack([np.ones(field.shape[0]), locs])
    field = field - X @ np.linalg.lstsq(X, field, rcond=None)[0]
    spec = make_smoother(locs, rho_s, nu_s, Euclidean())
    curve = derivative_curve(spec, field, norm_kind="max")
    scales = select_scales(curve)
    if len(scales.interior) > 1:
        best = max(scales.interior,
                   key=lambda lam: prominence(
                       curve.values, int(np.argmin(np.abs(curve.lambdas - lam)))))
        scales = ScaleSet(lambdas=(0.0, best, np.inf), curve=curve)
    z1p = z2p = None
    if fit_details and scales.L >= 3:
        dec = decompose(spec, scales, field[None, :])
        dists = pairwise_distances(locs, Euclidean())
        # details are noise-free functionals of the field, so the ML nugget
        # converges to zero anyway; pinning it saves most of the iterations
        f1 = fit_detail(dec.details[0], None, locs, Euclidean(),
                        init=_correlogram_init(dec.details[0], dists),
                        fix={"nugget": max(1e-6 * float(np.var(dec.details[0])), 1e-12)},
                        compute_hessian=False)
        f2 = fit_detail(dec.details[-1], None, locs, Euclidean(),
                        init=_correlogram_init(dec.details[-1], dists),
                        fix={"nugget": max(1e-6 * float(np.var(dec.details[-1])), 1e-12)},
                        compute_hessian=False)
        z1p, z2p = f1.spatial, f2.spatial
        check_last_detail_smoothness(z2p.nu)
    return SweepRecord(rho_s=rho_s, nu_s=nu_s, curve_lambdas=curve.lambdas,
                       curve_values=curve.values, selected=tuple(scales.interior),
                       z1_params=z1p, z2_params=z2p)


def run_sweep(n: int = 1024, seed=0, rho_grid=DEFAULT_RHO_GRID,
              nu_grid=DEFAULT_NU_GRID, fit_details: bool = True) -> SweepResult:
    """Sweep smoother settings over a fixed composed field."""
    rho_grid = tuple(rho_grid)
    nu_grid = tuple(nu_grid)
    if not rho_grid or not nu_grid:
        raise DomainError("sweep grids must be nonempty")
    locs, field = simulate_composition(n, seed)
    records = []
    for nu_s in nu_grid:
        for rho_s in rho_grid:
            try:
                records.append(analyze_setting(locs, field, rho_s, nu_s, fit_details))
            except Exception as e:  # record and continue with the next setting
                records.append(SweepRecord(rho_s=rho_s, nu_s=nu_s,
                                           curve_lambdas=np.empty(0),
                                           curve_values=np.empty(0), selected=(),
                                           z1_params=None, z2_params=None,
                                           failed=True, error=str(e)))
    return SweepResult(n=n, seed=seed, records=records)
