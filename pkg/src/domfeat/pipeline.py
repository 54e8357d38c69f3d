"""End-to-end pipeline: noise fit -> conditional draws -> scales -> details ->
credibility -> attribute fits -> block cross-validation, with CSV artifacts.

Every run writes a manifest recording the full configuration, the master seed
and the package version; all randomness flows from that one seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import DistanceMetric, Euclidean, GreatCircle, build_cov
from .credibility import pw_map
from .dataio import PredictorSpec, Schema, detrend_standardize, read_dataset
from .errors import DomainError, NonConvergenceError
from .estimation import PARAM_NAMES, default_init, fit_ml
from .sampling import conditional_sample, split_seed
from .scalespace import decompose, derivative_curve, make_smoother, select_scales
from .attributes import decompose_predictors, fit_detail
from .validation import block_split, run_cv


@dataclass
class PipelineConfig:
    dataset: str
    coord_cols: tuple[str, str]
    response_col: str
    predictors: tuple[PredictorSpec, ...] = ()
    metric: DistanceMetric = Euclidean()
    detrend_coord: int = 0
    rho_s: float = 1.0
    nu_s: float = 0.5
    B: int = 1000
    alpha: float = 0.95
    norm: str = "max"
    fix_nu: float | None = None         # pin the noise-model smoothness
    cv_k: int = 5
    cv_block_size: float = 1.0
    out: str = "out"
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        try:
            metric = _parse_metric(d.pop("metric", "euclidean"))
            preds = tuple(
                PredictorSpec(name=p["name"], kind=p.get("kind", "continuous"),
                              levels=tuple(p["levels"]) if p.get("levels") else None)
                for p in d.pop("predictors", []))
            coord_cols = tuple(d.pop("coord_cols"))
            if len(coord_cols) != 2:
                raise DomainError("coord_cols must name exactly two columns")
            cfg = cls(dataset=d.pop("dataset"), coord_cols=coord_cols,
                      response_col=d.pop("response_col"), predictors=preds,
                      metric=metric, **d)
        except (KeyError, TypeError) as e:
            raise DomainError(f"bad pipeline config: {e}") from e
        if not 0.5 < cfg.alpha < 1.0:
            raise DomainError("alpha must lie in (0.5, 1)")
        if cfg.norm not in ("max", "euclid"):
            raise DomainError("norm must be 'max' or 'euclid'")
        if cfg.B < 1 or cfg.cv_k < 2:
            raise DomainError("B must be >= 1 and cv_k >= 2")
        return cfg

    def to_manifest(self) -> dict:
        m = {"version": __version__, "dataset": self.dataset,
             "coord_cols": list(self.coord_cols), "response_col": self.response_col,
             "predictors": [{"name": p.name, "kind": p.kind,
                             "levels": list(p.levels) if p.levels else None}
                            for p in self.predictors],
             "metric": _metric_name(self.metric), "detrend_coord": self.detrend_coord,
             "rho_s": self.rho_s, "nu_s": self.nu_s, "B": self.B,
             "alpha": self.alpha, "norm": self.norm, "fix_nu": self.fix_nu,
             "cv_k": self.cv_k, "cv_block_size": self.cv_block_size,
             "out": self.out, "seed": self.seed, "threads": self.threads}
        return m


def _parse_metric(v) -> DistanceMetric:
    if isinstance(v, str):
        if v.lower() == "euclidean":
            return Euclidean()
        if v.lower() in ("greatcircle", "great_circle"):
            return GreatCircle()
        raise DomainError(f"unknown metric {v!r}")
    if isinstance(v, dict) and v.get("kind", "").lower() in ("greatcircle", "great_circle"):
        return GreatCircle(radius=float(v.get("radius", GreatCircle().radius)))
    raise DomainError(f"unknown metric {v!r}")


def _metric_name(m: DistanceMetric):
    if isinstance(m, Euclidean):
        return "euclidean"
    return {"kind": "greatcircle", "radius": m.radius}


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(str(c) for c in row) + "\n")


def run_pipeline(cfg: PipelineConfig, stages=("fit", "scales", "decompose", "attributes", "cv")):
    """Run the requested pipeline stages in order and write their artifacts.

    Stage failures abort with the stage name attached; artifacts of completed
    stages remain on disk.
    """
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(cfg.to_manifest(), f, indent=2, sort_keys=True)
        f.write("\n")

    schema = Schema(coord_cols=cfg.coord_cols, response_col=cfg.response_col,
                    predictors=cfg.predictors, metric=cfg.metric)
    ds = read_dataset(cfg.dataset, schema)
    resid, trend = detrend_standardize(ds.response, ds.locations, cfg.detrend_coord)
    seeds = split_seed(cfg.seed, 2)
    state = {"ds": ds, "resid": resid, "trend": trend}

    stage = "fit"
    try:
        fix = set()
        init = None
        if cfg.fix_nu is not None:
            init = default_init(resid, ds.locations, cfg.metric).replace(nu=cfg.fix_nu)
            fix = {"nu"}
        mlfit = fit_ml(resid, ds.locations, cfg.metric, init=init, fix=fix)
        if not mlfit.converged:
            raise NonConvergenceError("noise-model ML fit did not converge")
        _write_params_csv(outdir / "params.csv", mlfit)
        state["mlfit"] = mlfit
        if stages[-1] == "fit":
            return state

        stage = "scales"
        sigma = build_cov(ds.locations, mlfit.params, cfg.metric)
        ens = conditional_sample(resid, sigma, mlfit.params.nugget, cfg.B, seeds[0])
        spec = make_smoother(ds.locations, cfg.rho_s, cfg.nu_s, cfg.metric)
        curve = derivative_curve(spec, ens.mean, norm_kind=cfg.norm)
        scales = select_scales(curve)
        _write_csv(outdir / "curve.csv", ["lambda", "norm_value"],
                   [(_fmt(l), _fmt(v)) for l, v in zip(curve.lambdas, curve.values)])
        state.update(ens=ens, spec=spec, curve=curve, scales=scales)
        if stages[-1] == "scales":
            return state

        stage = "decompose"
        dec = decompose(spec, scales, ens)
        maps = [pw_map(dec.per_draw[:, ell, :], cfg.alpha) for ell in range(scales.L - 1)]
        for ell, (z, pm) in enumerate(zip(dec.details, maps), start=1):
            rows = [(_fmt(ds.locations[i, 0]), _fmt(ds.locations[i, 1]),
                     _fmt(z[i]), pm.labels[i], _fmt(pm.prob_pos[i]))
                    for i in range(ds.n)]
            _write_csv(outdir / f"detail_{ell}.csv",
                       [cfg.coord_cols[0], cfg.coord_cols[1], "value", "pw_label", "prob_pos"],
                       rows)
        state.update(dec=dec, maps=maps)
        if stages[-1] == "decompose":
            return state

        stage = "attributes"
        designs = [None] * (scales.L - 1)
        if ds.predictors is not None and ds.predictors.size:
            names = ("intercept", *ds.predictor_names)
            cols = np.column_stack([np.ones(ds.n), ds.predictors])
            designs = decompose_predictors(names, cols, spec, scales)
        fits = [fit_detail(z, designs[ell], ds.locations, cfg.metric)
                for ell, z in enumerate(dec.details)]
        _write_attributes_csv(outdir / "attributes.csv", fits)
        state["fits"] = fits
        if stages[-1] == "attributes":
            return state

        stage = "cv"
        split = block_split(ds.locations, cfg.cv_block_size, cfg.cv_k,
                            seed=seeds[1], metric=cfg.metric)
        fix_noise = {"nu": cfg.fix_nu} if cfg.fix_nu is not None else None
        report = run_cv(ds.locations, resid, split, cfg.metric, cfg.rho_s, cfg.nu_s,
                        cfg.B, seeds[1],
                        predictor_names=("intercept", *ds.predictor_names),
                        predictors=(np.column_stack([np.ones(ds.n), ds.predictors])
                                    if ds.predictors is not None else None),
                        norm_kind=cfg.norm, fix_noise=fix_noise)
        _write_cv_csv(outdir / "cv_report.csv", outdir / "cv_summary.json", report)
        state.update(split=split, report=report)
        return state
    except Exception as e:
        raise PipelineStageError(stage, e) from e


class PipelineStageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"pipeline stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _write_params_csv(path: Path, fit):
    vals = {"rho": fit.params.rho, "sigma2": fit.params.sigma2,
            "nu": fit.params.nu, "nugget": fit.params.nugget}
    rows = []
    for name in PARAM_NAMES:
        lo, hi = fit.wald.get(name, (vals[name], vals[name]))
        rows.append((name, _fmt(vals[name]), _fmt(lo), _fmt(hi)))
    rows.append(("loglik", _fmt(fit.loglik), "", ""))
    _write_csv(path, ["parameter", "estimate", "lower", "upper"], rows)


def _write_attributes_csv(path: Path, fits):
    rows = []
    for ell, fit in enumerate(fits, start=1):
        entries = {}
        if fit.beta is not None:
            for name, b in zip(fit.beta_names, fit.beta):
                entries[f"beta_{name}"] = b
        entries.update(rho=fit.spatial.rho, sigma2=fit.spatial.sigma2,
                       nu=fit.spatial.nu, nugget=fit.spatial.nugget)
        for name, est in entries.items():
            lo, hi = fit.wald.get(name, (est, est))
            rows.append((str(ell), name, _fmt(est), _fmt(lo), _fmt(hi)))
        rows.append((str(ell), "fixed_effect_variance",
                     _fmt(fit.fixed_effect_variance), "", ""))
        rows.append((str(ell), "loglik", _fmt(fit.loglik), "", ""))
    _write_csv(path, ["detail", "parameter", "estimate", "lower", "upper"], rows)


def _write_cv_csv(path: Path, summary_path: Path, report):
    rows = [("", "header", report.header)]
    for fr in report.folds:
        if fr.failed:
            rows.append((str(fr.fold), "failed", fr.error))
            continue
        rows.append((str(fr.fold), "rmse", _fmt(fr.rmse)))
        rows.append((str(fr.fold), "crps", _fmt(fr.crps)))
        for i, lam in enumerate(fr.scales, start=1):
            rows.append((str(fr.fold), f"lambda_{i}", _fmt(lam)))
    _write_csv(path, ["fold", "metric", "value"], rows)
    mean, sd = report.scale_stability
    summary = {"header": report.header,
               "scale_lambda": report.scale_summary(),
               "scale_lambda_mean": mean, "scale_lambda_sd": sd,
               "rmse": report.rmse, "crps": report.crps,
               "failed_folds": [f.fold for f in report.folds if f.failed]}
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
