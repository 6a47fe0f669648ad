"""Matrix-free maximum-likelihood factor analysis for wide data (p >> n)."""

from .data import (
    SCALE_MODES,
    ConstantColumnError,
    DataFormatError,
    DataSet,
    ImplicitW,
    diag_s,
    ingest,
    read_binary,
    read_csv,
    w_times,
    write_binary,
    write_csv,
    wt_times,
)
from .em import EmConfig, em_step, fit_em
from .fit import FitConfig, fit_fad, initial_estimates
from .lanczos import SingularTriplets, partial_svd
from .lbfgsb import LbfgsConfig, maximize
from .profile import (
    SvdConfig,
    SvdNotConverged,
    canonical_rotation,
    full_loglik,
    profile_eval,
    recover_loadings,
    rescale_to_covariance,
)
from .report import FitReport, bic
from .selection import ComparisonReport, compare_fits, select_q
from .simulate import PRESETS, FactorTruth, SimConfig, generate, run_experiment

__version__ = "0.1.0"

__all__ = [
    "SCALE_MODES",
    "ConstantColumnError",
    "DataFormatError",
    "DataSet",
    "ImplicitW",
    "diag_s",
    "ingest",
    "read_binary",
    "read_csv",
    "w_times",
    "write_binary",
    "write_csv",
    "wt_times",
    "EmConfig",
    "em_step",
    "fit_em",
    "FitConfig",
    "fit_fad",
    "initial_estimates",
    "SingularTriplets",
    "partial_svd",
    "LbfgsConfig",
    "maximize",
    "SvdConfig",
    "SvdNotConverged",
    "canonical_rotation",
    "full_loglik",
    "profile_eval",
    "recover_loadings",
    "rescale_to_covariance",
    "FitReport",
    "bic",
    "ComparisonReport",
    "compare_fits",
    "select_q",
    "PRESETS",
    "FactorTruth",
    "SimConfig",
    "generate",
    "run_experiment",
]
