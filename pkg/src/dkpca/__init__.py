"""Deep kernel PCA: stacked kernel PCA levels coupled forward and backward.

Each level solves an eigenvalue-like problem on its own kernel matrix plus a
coupling term from the level above; all levels are trained jointly by
projected gradient descent on the Stiefel manifold.
"""
__version__ = "0.1.0"

from .core import (
    ArchitectureSpec,
    DeepState,
    FitReport,
    Init,
    LevelSpec,
    TrainConfig,
    analytic_two_level_linear,
    fit,
    gradient,
    init_state,
    level_matrix,
    objective,
    shallow_kpca,
    two_level_linear,
)
from .errors import (
    ConditionViolatedError,
    CsvParseError,
    DegenerateInputError,
    DKPCAError,
    InvalidArgumentError,
    NoSupportError,
    NumericalFailure,
)
from .generative import FittedModel, TraversalSpec, encode_oos, fit_model, reconstruct, traverse
from .kernels import Linear, RBF

__all__ = [
    "ArchitectureSpec", "DeepState", "FitReport", "Init", "LevelSpec", "TrainConfig",
    "analytic_two_level_linear", "fit", "gradient", "init_state", "level_matrix", "objective",
    "shallow_kpca", "two_level_linear",
    "ConditionViolatedError", "CsvParseError", "DegenerateInputError", "DKPCAError",
    "InvalidArgumentError", "NoSupportError", "NumericalFailure",
    "FittedModel", "TraversalSpec", "encode_oos", "fit_model", "reconstruct", "traverse",
    "Linear", "RBF",
]
