"""Dataset ingestion, detrending/standardization and map-grid interpolation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .covariance import DistanceMetric, Euclidean, GreatCircle
from .errors import DomainError


@dataclass(frozen=True)
class PredictorSpec:
    """Declared predictor column: continuous or ordered-categorical."""

    name: str
    kind: str = "continuous"                  # or "ordered"
    levels: tuple | None = None               # level -> integer code order

    def __post_init__(self):
        if self.kind not in ("continuous", "ordered"):
            raise DomainError(f"unknown predictor kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    coord_cols: tuple[str, str]
    response_col: str
    predictors: tuple[PredictorSpec, ...] = ()
    delimiter: str = ","
    metric: DistanceMetric = Euclidean()


@dataclass
class SpatialDataset:
    locations: np.ndarray            # (n, 2)
    response: np.ndarray             # (n,)
    predictor_names: tuple[str, ...]
    predictors: np.ndarray | None    # (n, k) numeric after encoding
    metric: DistanceMetric
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.locations.shape[0]


def read_dataset(path, schema: Schema) -> SpatialDataset:
    """Load and validate a delimited text file against the schema.

    Duplicate locations and missing responses are rejected with the offending
    row numbers (1-based, excluding the header).
    """
    try:
        df = pd.read_csv(path, delimiter=schema.delimiter)
    except Exception as e:
        raise DomainError(f"failed to parse {path}: {e}") from e
    needed = [*schema.coord_cols, schema.response_col] + [p.name for p in schema.predictors]
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise DomainError(f"missing columns in {path}: {missing}")
    locs = df[list(schema.coord_cols)].to_numpy(dtype=float)
    resp = df[schema.response_col].to_numpy(dtype=float)
    if np.any(~np.isfinite(resp)):
        rows = np.flatnonzero(~np.isfinite(resp)) + 1
        raise DomainError(f"missing/non-finite response at rows {rows.tolist()}")
    _, first = np.unique(locs, axis=0, return_index=True)
    if first.size != locs.shape[0]:
        seen = {}
        for i, key in enumerate(map(tuple, locs)):
            if key in seen:
                raise DomainError(
                    f"duplicate location at rows {seen[key] + 1} and {i + 1}")
            seen[key] = i
    cols, names = [], []
    for spec in schema.predictors:
        col = df[spec.name]
        if spec.kind == "ordered":
            if spec.levels is not None:
                lut = {lv: i for i, lv in enumerate(spec.levels)}
                bad = ~col.isin(spec.levels)
                if bad.any():
                    raise DomainError(
                        f"predictor {spec.name!r}: values outside declared levels "
                        f"at rows {(np.flatnonzero(bad) + 1).tolist()}")
                vals = col.map(lut).to_numpy(dtype=float)
            else:
                vals = col.to_numpy(dtype=float)
                if np.unique(vals).size > 2 and not _is_integral(vals):
                    raise DomainError(
                        f"predictor {spec.name!r}: ordered categorical with > 2 "
                        "levels needs an explicit level ordering")
        else:
            vals = col.to_numpy(dtype=float)
        cols.append(vals)
        names.append(spec.name)
    predictors = np.column_stack(cols) if cols else None
    return SpatialDataset(locations=locs, response=resp,
                          predictor_names=tuple(names), predictors=predictors,
                          metric=schema.metric, meta={"path": str(path)})


def _is_integral(vals) -> bool:
    return bool(np.all(np.isfinite(vals)) and np.all(vals == np.round(vals)))


def write_dataset(ds: SpatialDataset, path, schema: Schema) -> None:
    """Round-trippable CSV export of a dataset."""
    data = {schema.coord_cols[0]: ds.locations[:, 0],
            schema.coord_cols[1]: ds.locations[:, 1],
            schema.response_col: ds.response}
    for j, name in enumerate(ds.predictor_names):
        data[name] = ds.predictors[:, j]
    pd.DataFrame(data).to_csv(path, sep=schema.delimiter, index=False)


@dataclass(frozen=True)
class TrendModel:
    """Linear trend on one coordinate plus the sd used for standardization."""

    intercept: float
    slope: float
    sd: float
    coord_index: int

    def invert(self, residuals, locs) -> np.ndarray:
        coord = np.asarray(locs, dtype=float)[:, self.coord_index]
        return np.asarray(residuals, dtype=float) * self.sd + self.intercept + self.slope * coord


def detrend_standardize(response, locs, coord_index: int = 0):
    """OLS-detrend the response on one coordinate and scale to unit sd.

    Returns the standardized residuals (mean 0, sd 1) and the trend model
    needed to invert the transform.
    """
    y = np.asarray(response, dtype=float)
    coord = np.asarray(locs, dtype=float)[:, coord_index]
    if np.ptp(y) == 0.0:
        raise DomainError("response has zero variance")
    X = np.column_stack([np.ones_like(coord), coord])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sd = float(np.std(resid, ddof=0))
    if sd == 0.0:
        raise DomainError("residuals have zero variance")
    resid = resid / sd
    resid = resid - resid.mean()  # remove OLS rounding residue
    return resid, TrendModel(intercept=float(coef[0]), slope=float(coef[1]),
                             sd=sd, coord_index=coord_index)


def grid_interpolate(locs, values, grid, power: float = 2.0, neighbors: int = 8):
    """Inverse-distance-weighted interpolation onto arbitrary target points.

    Exact at coincident points.  Distances are Euclidean in the coordinate
    units (map export plumbing, not part of the spatial model).
    """
    locs = np.asarray(locs, dtype=float)
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if locs.size == 0 or grid.size == 0:
        raise DomainError("empty inputs to grid_interpolate")
    if neighbors < 1:
        raise DomainError("need at least one neighbor")
    neighbors = min(neighbors, locs.shape[0])
    tree = cKDTree(locs)
    dist, idx = tree.query(grid, k=neighbors)
    dist = np.atleast_2d(dist.T).T if neighbors == 1 else dist
    idx = np.atleast_2d(idx.T).T if neighbors == 1 else idx
    out = np.empty(grid.shape[0])
    exact = dist[:, 0] == 0.0
    out[exact] = values[idx[exact, 0]]
    rest = ~exact
    if np.any(rest):
        w = 1.0 / dist[rest] ** power
        out[rest] = np.sum(w * values[idx[rest]], axis=1) / np.sum(w, axis=1)
    return out
