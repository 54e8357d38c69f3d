"""Dominant-feature identification for geostatistical data.

Reconstructs a latent Gaussian field from noisy point observations, splits it
into scale-dependent details, flags credibly nonzero features, estimates
scale-dependent covariance parameters and linear driver effects, and guards
against overfitting with spatial block cross-validation.
"""

__version__ = "0.1.0"

from .covariance import (CovMatrix, Euclidean, GreatCircle, MaternParams,
                         build_corr, build_cov, distance, matern_cov,
                         pairwise_distances)
from .credibility import PWMap, pw_map
from .errors import DomainError, NonConvergenceError, NumericError
from .estimation import MLFit, fit_ml, gaussian_loglik, wald_intervals
from .sampling import SampleEnsemble, conditional_moments, conditional_sample, simulate_gp
from .scalespace import (Decomposition, ScaleSet, SmootherSpec, decompose,
                         derivative_curve, make_smoother, scale_derivative,
                         select_scales, smooth)
from .attributes import AttributeFit, DesignMatrix, decompose_predictors, fit_detail, predict_detail
from .validation import BlockSplit, CVReport, block_split, crps_gaussian, rmse, run_cv
from .dataio import (PredictorSpec, Schema, SpatialDataset, TrendModel,
                     detrend_standardize, grid_interpolate, read_dataset,
                     write_dataset)
from .simstudy import SweepResult, run_sweep, simulate_composition

__all__ = [
    "__version__",
    "MaternParams", "Euclidean", "GreatCircle", "CovMatrix",
    "matern_cov", "distance", "pairwise_distances", "build_cov", "build_corr",
    "MLFit", "gaussian_loglik", "fit_ml", "wald_intervals",
    "SampleEnsemble", "simulate_gp", "conditional_moments", "conditional_sample",
    "SmootherSpec", "ScaleSet", "Decomposition", "make_smoother", "smooth",
    "scale_derivative", "derivative_curve", "select_scales", "decompose",
    "PWMap", "pw_map",
    "DesignMatrix", "AttributeFit", "decompose_predictors", "fit_detail", "predict_detail",
    "BlockSplit", "CVReport", "block_split", "rmse", "crps_gaussian", "run_cv",
    "SpatialDataset", "Schema", "PredictorSpec", "TrendModel",
    "read_dataset", "write_dataset", "detrend_standardize", "grid_interpolate",
    "simulate_composition", "run_sweep", "SweepResult",
    "DomainError", "NumericError", "NonConvergenceError",
]
