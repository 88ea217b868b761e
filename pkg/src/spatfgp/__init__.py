"""Gaussian-process emulation of spatial maps driven by functional inputs."""

from . import _backend
from .errors import (DataError, DegenerateVarianceError, FactorizationError,
                     FitError, NumericalConsistencyError, NumericalError,
                     ParameterError, ShapeError)
from .funspace import (FunctionalInput, PcaBasis, ProjectedInputs,
                       ScenarioInputs, fit_pca, fit_projection,
                       grid_lengthscales, preprocess_cartesian, project,
                       project_inputs, reconstruct)
from .gp import (DenseTrainingSet, FittedModel, Hyperparameters, LooConfig,
                 OptimizerConfig, TensorTrainingSet, fit_ml, forecast_map,
                 log_marginal_likelihood, loo, predict,
                 profiled_log_likelihood)
from .kernels import (FunctionalKernelSpec, KernelKind, SpatialKernelSpec,
                      separable_cov)

__version__ = "0.1.0"

__all__ = [
    "DataError", "DegenerateVarianceError", "DenseTrainingSet", "FactorizationError",
    "FitError", "FittedModel", "FunctionalInput", "FunctionalKernelSpec",
    "Hyperparameters", "KernelKind", "LooConfig", "NumericalConsistencyError",
    "NumericalError", "OptimizerConfig", "ParameterError", "PcaBasis",
    "ProjectedInputs", "ScenarioInputs", "ShapeError", "SpatialKernelSpec",
    "TensorTrainingSet", "fit_ml", "fit_pca", "fit_projection", "forecast_map",
    "grid_lengthscales", "log_marginal_likelihood", "loo", "predict",
    "preprocess_cartesian", "profiled_log_likelihood", "project", "project_inputs",
    "reconstruct", "separable_cov",
]
