"""Command-line driver.

Commands: pipeline, simstudy, fit, scales, decompose, cv.
Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from .errors import DomainError, NonConvergenceError, NumericError
from .pipeline import PipelineConfig, PipelineStageError, run_pipeline, _write_csv
from .simstudy import DEFAULT_NU_GRID, DEFAULT_RHO_GRID, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NONCONVERGENCE = 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="domfeat",
                                description="dominant-feature identification for geostatistical data")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML configuration file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--out", help="override the output directory")
        sp.add_argument("--threads", type=int, help="worker threads (advisory)")
        sp.add_argument("--norm", choices=["max", "euclid"], help="derivative-norm kind")
        sp.add_argument("--alpha", type=float, help="credibility level")

    for name, doc in [("pipeline", "run all five stages"),
                      ("fit", "noise-model ML fit only"),
                      ("scales", "fit, sample and select scales"),
                      ("decompose", "everything up to details and PW maps"),
                      ("cv", "full pipeline including block cross-validation")]:
        common(sub.add_parser(name, help=doc))

    sp = sub.add_parser("simstudy", help="smoothing-parameter stability sweep")
    sp.add_argument("--config", help="YAML configuration file (optional)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--n", type=int, default=None, help="number of simulated locations")
    sp.add_argument("--threads", type=int, help="worker threads (advisory)")
    return p


_STAGES = {"fit": ("fit",),
           "scales": ("fit", "scales"),
           "decompose": ("fit", "scales", "decompose"),
           "pipeline": ("fit", "scales", "decompose", "attributes", "cv"),
           "cv": ("fit", "scales", "decompose", "attributes", "cv")}


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            cfg = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise DomainError(f"cannot read config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise DomainError("config file must hold a mapping")
    return cfg


def cmd_pipeline(args) -> int:
    raw = _load_config(args.config)
    for key, attr in [("seed", "seed"), ("out", "out"), ("threads", "threads"),
                      ("norm", "norm"), ("alpha", "alpha")]:
        v = getattr(args, attr, None)
        if v is not None:
            raw[key] = v
    cfg = PipelineConfig.from_dict(raw)
    run_pipeline(cfg, stages=_STAGES[args.command])
    return EXIT_OK


def cmd_simstudy(args) -> int:
    raw = _load_config(args.config) if args.config else {}
    n = args.n if args.n is not None else int(raw.get("n", 1024))
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    out = args.out if args.out is not None else raw.get("out", "out")
    rho_grid = tuple(raw.get("rho_grid", DEFAULT_RHO_GRID))
    nu_grid = tuple(raw.get("nu_grid", DEFAULT_NU_GRID))
    if not rho_grid or not nu_grid or any(v <= 0 for v in (*rho_grid, *nu_grid)):
        raise DomainError("sweep grids must be nonempty and positive")
    result = run_sweep(n=n, seed=seed, rho_grid=rho_grid, nu_grid=nu_grid)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(outdir / "sweep.csv", ["setting", "kind", "key", "value"],
               result.to_rows())
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simstudy":
            return cmd_simstudy(args)
        return cmd_pipeline(args)
    except PipelineStageError as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e.cause, NonConvergenceError):
            return EXIT_NONCONVERGENCE
        if isinstance(e.cause, DomainError):
            return EXIT_CONFIG
        return EXIT_NUMERIC
    except NonConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except DomainError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
