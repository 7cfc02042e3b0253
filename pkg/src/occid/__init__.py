"""Identification of higher-order control-affine systems with control occupation kernels."""

from .errors import ConfigError, DataFormatError, NumericalError, OccidError
from .kernel import KernelConfig, kernel_cross_matrix, kernel_eval
from .occkernel import (
    GramMatrix,
    OccupationBasis,
    gram_entry,
    gram_matrix,
    occ_eval,
    occ_eval_batch,
    target_matrix,
    target_vector,
)
from .regression import (
    IdentifiedModel,
    fit,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from .trajectory import (
    QuadratureRule,
    Trajectory,
    cauchy_weights,
    estimate_initial_derivatives,
    load_trajectory,
    quadrature_rule,
    save_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataFormatError",
    "GramMatrix",
    "IdentifiedModel",
    "KernelConfig",
    "NumericalError",
    "OccidError",
    "OccupationBasis",
    "QuadratureRule",
    "Trajectory",
    "cauchy_weights",
    "estimate_initial_derivatives",
    "fit",
    "gram_entry",
    "gram_matrix",
    "kernel_cross_matrix",
    "kernel_eval",
    "load_model",
    "load_trajectory",
    "occ_eval",
    "occ_eval_batch",
    "predict",
    "predict_batch",
    "quadrature_rule",
    "save_model",
    "save_trajectory",
    "target_matrix",
    "target_vector",
]
