"""Zero-adjusted log-symmetric quantile regression."""

__version__ = "0.1.0"

from .distributions import ZALS, QuantileLS
from .generators import GeneratorKind
from .optimizer import OptimOptions, maximize
from .regression import (
    Coefficients,
    FitOptions,
    FittedModel,
    ModelSpec,
    fit,
    fit_sweep,
    randomized_quantile_residuals,
    select_xi,
)
from .simulation import SimDesign, run_study

__all__ = [
    "Coefficients",
    "FitOptions",
    "FittedModel",
    "GeneratorKind",
    "ModelSpec",
    "OptimOptions",
    "QuantileLS",
    "SimDesign",
    "ZALS",
    "__version__",
    "fit",
    "fit_sweep",
    "maximize",
    "randomized_quantile_residuals",
    "run_study",
    "select_xi",
]
