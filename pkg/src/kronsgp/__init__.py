"""Kronecker-accelerated exact and sparse variational Gaussian processes."""

__version__ = "0.1.0"

from .dense import DenseGpProblem, log_marginal, predict_dense  # noqa: E402
from .egp import egp_fit, egp_log_marginal, egp_predict  # noqa: E402
from .esgp import InducingGrid, InducingSubspace, esgp_elbo, esgp_fit, esgp_predict  # noqa: E402
from .estimators import EGPRegressor, ESGPRegressor, ExactGPRegressor  # noqa: E402
from .exceptions import (  # noqa: E402
    ConfigError,
    DimensionError,
    IncompleteProductError,
    KronsgpError,
    NumericalError,
)
from .inputs import ProductInputs, decompose  # noqa: E402
from .kernels import SE, Hyperparameters, Periodic, ProductKernel, pack, unpack  # noqa: E402
from .mcmc import MHConfig, mh_run, train  # noqa: E402
from .metrics import evaluate, msll, rmse  # noqa: E402

__all__ = [
    "ConfigError",
    "DenseGpProblem",
    "DimensionError",
    "EGPRegressor",
    "ESGPRegressor",
    "ExactGPRegressor",
    "Hyperparameters",
    "IncompleteProductError",
    "InducingGrid",
    "InducingSubspace",
    "KronsgpError",
    "MHConfig",
    "NumericalError",
    "Periodic",
    "ProductInputs",
    "ProductKernel",
    "SE",
    "decompose",
    "egp_fit",
    "egp_log_marginal",
    "egp_predict",
    "esgp_elbo",
    "esgp_fit",
    "esgp_predict",
    "evaluate",
    "log_marginal",
    "mh_run",
    "msll",
    "pack",
    "predict_dense",
    "rmse",
    "train",
    "unpack",
]
