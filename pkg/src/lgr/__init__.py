"""Local Gaussian regression: Bayesian local linear models fitted by variational EM."""

from .baseline_lwr import LWRModel, lwr_fit, lwr_place_centers, lwr_predict, lwr_predict_batch
from .data import Dataset, load_csv, mse, nmse, save_csv
from .errors import (
    ConfigError,
    DataError,
    EmptyModelError,
    LGRError,
    ModelFileError,
    NumericalError,
    UsageError,
)
from .model import FitConfig, FitReport, LGRModel, fit, maybe_add_model, prune
from .serialization import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "Dataset", "EmptyModelError", "FitConfig", "FitReport",
    "LGRError", "LGRModel", "LWRModel", "ModelFileError", "NumericalError", "UsageError",
    "fit", "load_csv", "load_model", "lwr_fit", "lwr_place_centers", "lwr_predict",
    "lwr_predict_batch", "maybe_add_model", "mse", "nmse", "prune", "save_csv", "save_model",
]
