"""Stationary kernels on functional and spatial inputs, and their product."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._gram_py import KIND_CODES, ZERO_DISTANCE
from .errors import DataError, ParameterError, ShapeError
from .funspace import ProjectedInputs, functional_distance_sq


class KernelKind(str, enum.Enum):
    SQUARED_EXPONENTIAL = "se"
    MATERN52 = "matern52"
    MATERN32 = "matern32"
    EXPONENTIAL = "exp"

    @property
    def code(self) -> int:
        return KIND_CODES[self.value]

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        aliases = {
            "squaredexponential": "se", "squared_exponential": "se", "rbf": "se",
            "gaussian": "se", "matern5/2": "matern52", "matern_52": "matern52",
            "matern3/2": "matern32", "matern_32": "matern32", "exponential": "exp",
        }
        key = str(value).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ParameterError(f"unknown kernel kind {value!r}") from None


def stationary_value(kind, normed_distance: float, variance: float = 1.0) -> float:
    """Evaluate a stationary kernel at a length-scaled distance."""
    kind = KernelKind.parse(kind)
    if not np.isfinite(normed_distance) or normed_distance < 0:
        raise ParameterError(f"distance must be nonnegative, got {normed_distance}")
    if not np.isfinite(variance) or variance <= 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    r = 0.0 if normed_distance < ZERO_DISTANCE else float(normed_distance)
    if kind is KernelKind.SQUARED_EXPONENTIAL:
        v = np.exp(-0.5 * r * r)
    elif kind is KernelKind.MATERN52:
        s = np.sqrt(5.0) * r
        v = (1.0 + s + s * s / 3.0) * np.exp(-s)
    elif kind is KernelKind.MATERN32:
        s = np.sqrt(3.0) * r
        v = (1.0 + s) * np.exp(-s)
    else:
        v = np.exp(-r)
    return float(variance * v)


def _positive(values, what):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise ParameterError(f"{what} must be positive and finite, got {values}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class FunctionalKernelSpec:
    """Correlation kernel (unit variance) on projected functional inputs."""

    kind: KernelKind
    lengthscales: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        object.__setattr__(self, "lengthscales", _positive(self.lengthscales, "functional length-scales"))

    def inv_scales(self, projected: ProjectedInputs) -> np.ndarray:
        if len(self.lengthscales) != len(projected.bases):
            raise ShapeError(
                f"{len(self.lengthscales)} length-scales for {len(projected.bases)} channels")
        return 1.0 / np.asarray(self.lengthscales)[projected.column_channel]


@dataclass(frozen=True)
class SpatialKernelSpec:
    kind: KernelKind
    lengthscales: tuple
    variance: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        ls = _positive(self.lengthscales, "spatial length-scales")
        if len(ls) != 2:
            raise ParameterError("two spatial length-scales are required")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "variance", _positive([self.variance], "spatial variance")[0])

    @property
    def inv_scales(self) -> np.ndarray:
        return 1.0 / np.asarray(self.lengthscales)


def functional_corr(spec: FunctionalKernelSpec, a, b) -> float:
    """Correlation between two projected scenarios (per-channel coefficient lists)."""
    d2 = functional_distance_sq(a, b, spec.lengthscales)
    return stationary_value(spec.kind, np.sqrt(d2), 1.0)


def spatial_cov(spec: SpatialKernelSpec, x, x_prime) -> float:
    x = np.asarray(x, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    if x.shape != (2,) or xp.shape != (2,) or not (np.all(np.isfinite(x)) and np.all(np.isfinite(xp))):
        raise DataError("spatial points must be finite 2D coordinates")
    r = np.sqrt(np.sum(((x - xp) * spec.inv_scales) ** 2))
    return stationary_value(spec.kind, r, spec.variance)


def cross_functional(spec: FunctionalKernelSpec, a: ProjectedInputs, b: ProjectedInputs) -> np.ndarray:
    """len(a) x len(b) correlation matrix between two projected sets."""
    if a.p_vector != b.p_vector:
        raise ShapeError(f"projections differ: p={a.p_vector} vs p={b.p_vector}")
    w = spec.inv_scales(a)
    if w.size == 0:
        return np.ones((a.n_scenarios, b.n_scenarios))
    return _backend.gram(a.stacked, b.stacked, w, spec.kind.code, 1.0)


def gram_functional(spec: FunctionalKernelSpec, projected: ProjectedInputs) -> np.ndarray:
    K = cross_functional(spec, projected, projected)
    # exact symmetry and unit diagonal
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def _locations(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != 2:
        raise ShapeError("locations must be an S x 2 matrix")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite location coordinates")
    return x


def cross_spatial(spec: SpatialKernelSpec, x1, x2) -> np.ndarray:
    return _backend.gram(_locations(x1), _locations(x2), spec.inv_scales, spec.kind.code, spec.variance)


def gram_spatial(spec: SpatialKernelSpec, locations) -> np.ndarray:
    K = cross_spatial(spec, locations, locations)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, spec.variance)
    return K


def separable_cov(fspec: FunctionalKernelSpec, sspec: SpatialKernelSpec, first, second) -> float:
    """Product kernel between ``(scenario, point)`` pairs.

    Scenarios are given as per-channel coefficient lists.
    """
    (fa, xa), (fb, xb) = first, second
    return functional_corr(fspec, fa, fb) * spatial_cov(sspec, xa, xb)


class CoregionalizationView:
    """Read-only multioutput view of a functional Gram matrix.

    Output ``i`` is the map driven by scenario ``i``; the coregionalization
    coefficient ``b(i, j)`` is the functional correlation ``K_f[i, j]``.
    """

    def __init__(self, K_f, tol: float = 1e-12):
        K = np.array(K_f, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ShapeError("K_f must be square")
        if np.max(np.abs(K - K.T), initial=0.0) > tol * max(1.0, np.max(np.abs(K))):
            raise DataError("K_f is not symmetric")
        K.setflags(write=False)
        self._K = K

    @property
    def matrix(self) -> np.ndarray:
        return self._K

    def b(self, i: int, j: int) -> float:
        return float(self._K[i, j])

    def kernel(self, spatial: SpatialKernelSpec, i: int, j: int, x, x_prime) -> float:
        return self.b(i, j) * spatial_cov(spatial, x, x_prime)
