"""Exception hierarchy.

Data and shape problems subclass :class:`ValueError`; numerical failures
subclass :class:`NumericalError`. The CLI maps the first family to exit code 1
and the second to exit code 2.
"""

import numpy as np


class DataError(ValueError):
    """Invalid input values (non-finite entries, negative magnitudes, ...)."""


class ShapeError(DataError):
    """Arrays with incompatible lengths or dimensions."""


class ParameterError(ValueError):
    """Invalid user-supplied parameter (length-scale, target, cluster count, ...)."""


class DegenerateVarianceError(DataError):
    """The test vector has zero variance; use the pooled-variance Q2 instead."""


class NumericalError(np.linalg.LinAlgError):
    """Base class for numerical failures."""


class FactorizationError(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""


class NumericalConsistencyError(NumericalError):
    """A quantity that must be nonnegative came out clearly negative."""


class FitError(NumericalError):
    """Hyperparameter fitting failed."""

    def __init__(self, message, hyperparameters=None):
        super().__init__(message)
        self.hyperparameters = hyperparameters
