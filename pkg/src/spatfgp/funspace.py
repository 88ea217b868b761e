"""Functional inputs: containers, per-channel PCA bases and L2 distances.

Curves are stored on a shared uniform time grid. Distances use the
unit-weight discrete inner product on that grid, so an orthonormal PCA basis
gives the coefficient-space distance directly. Use :func:`grid_lengthscales`
to express integral-scale length-scales (as in the continuous L2 norm) in
these grid units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, ParameterError, ShapeError

# relative slack when comparing cumulative inertia with the target
_INERTIA_SLACK = 1e-12


@dataclass(frozen=True)
class FunctionalInput:
    channel_id: str
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape:
            raise ShapeError(f"channel {self.channel_id!r}: values and grid lengths differ")
        if grid.size < 2:
            raise ShapeError(f"channel {self.channel_id!r}: at least 2 time stamps required")
        if not np.all(np.isfinite(values)) or not np.all(np.isfinite(grid)):
            raise DataError(f"channel {self.channel_id!r}: non-finite values")
        if np.any(np.diff(grid) <= 0):
            raise DataError(f"channel {self.channel_id!r}: grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class ScenarioInputs:
    """R scenarios x Q channels of curves on one shared time grid.

    ``curves`` has shape ``(R, Q, tau)``.
    """

    channels: tuple
    grid: np.ndarray
    curves: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        curves = np.asarray(self.curves, dtype=float)
        channels = tuple(str(c) for c in self.channels)
        if curves.ndim != 3:
            raise ShapeError("curves must have shape (R, Q, tau)")
        if curves.shape[0] < 1:
            raise ShapeError("at least one scenario is required")
        if curves.shape[1] != len(channels) or curves.shape[2] != grid.size:
            raise ShapeError(
                f"curves shape {curves.shape} does not match {len(channels)} channels "
                f"and {grid.size} time stamps")
        if len(set(channels)) != len(channels):
            raise DataError("duplicate channel identifiers")
        if grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise DataError("time grid must be strictly increasing with at least 2 points")
        if not np.all(np.isfinite(curves)):
            raise DataError("non-finite curve values")
        curves.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "channels", channels)

    @classmethod
    def from_records(cls, records: Sequence[Sequence[FunctionalInput]]) -> "ScenarioInputs":
        """Build from per-scenario lists of :class:`FunctionalInput`."""
        if not records:
            raise ShapeError("at least one scenario is required")
        channels = tuple(f.channel_id for f in records[0])
        grid = records[0][0].grid
        curves = []
        for r, rec in enumerate(records):
            if tuple(f.channel_id for f in rec) != channels:
                raise DataError(f"scenario {r}: channels differ from scenario 0")
            for f in rec:
                if f.grid.shape != grid.shape or not np.array_equal(f.grid, grid):
                    raise DataError(f"scenario {r}, channel {f.channel_id!r}: grid differs")
            curves.append([f.values for f in rec])
        return cls(channels, grid, np.array(curves))

    @property
    def n_scenarios(self) -> int:
        return self.curves.shape[0]

    @property
    def n_channels(self) -> int:
        return self.curves.shape[1]

    def channel(self, i) -> np.ndarray:
        """R x tau matrix of channel ``i`` (index or identifier)."""
        if not isinstance(i, (int, np.integer)):
            i = self.channels.index(i)
        return self.curves[:, i, :]

    def subset(self, indices) -> "ScenarioInputs":
        idx = np.atleast_1d(np.asarray(indices, dtype=int))
        return ScenarioInputs(self.channels, self.grid, self.curves[idx])

    def scenario(self, r) -> list:
        return [FunctionalInput(c, self.grid, self.curves[r, q]) for q, c in enumerate(self.channels)]


@dataclass(frozen=True)
class PcaBasis:
    channel_id: str
    mean_curve: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    total_variance: float
    inertia_target: float

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    @property
    def dropped_variance(self) -> float:
        return max(self.total_variance - float(np.sum(self.eigenvalues)), 0.0)

    def to_dict(self) -> dict:
        return {
            "channel_id": self.channel_id,
            "mean_curve": self.mean_curve.tolist(),
            "basis": self.basis.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "total_variance": self.total_variance,
            "inertia_target": self.inertia_target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PcaBasis":
        mean = np.asarray(d["mean_curve"], dtype=float)
        basis = np.asarray(d["basis"], dtype=float).reshape(mean.size, -1)
        return cls(d["channel_id"], mean, basis, np.asarray(d["eigenvalues"], dtype=float),
                   float(d["total_variance"]), float(d["inertia_target"]))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each one's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_pca(replicates, inertia_target: float = 0.999, channel_id: str = "") -> PcaBasis:
    """Fit a truncated PCA basis to an R x tau matrix of replicate curves.

    The basis is made of the leading eigenvectors of the covariance
    ``Fc.T @ Fc / R`` of the centered replicates, truncated at the smallest
    number of components whose cumulative inertia reaches ``inertia_target``.
    A channel with (numerically) zero variance gets an empty basis.
    """
    F = np.asarray(replicates, dtype=float)
    if F.ndim == 1:
        F = F[None, :]
    if F.ndim != 2 or F.shape[0] < 1 or F.shape[1] < 1:
        raise ShapeError("replicates must be a non-empty R x tau matrix")
    if not np.all(np.isfinite(F)):
        raise DataError(f"channel {channel_id!r}: non-finite replicate values")
    if not (0.0 < inertia_target <= 1.0):
        raise ParameterError(f"inertia_target must lie in (0, 1], got {inertia_target}")

    n, tau = F.shape
    mean = F.mean(axis=0)
    Fc = F - mean
    cov = Fc.T @ Fc / n
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals[::-1], 0.0, None)
    evecs = evecs[:, ::-1]
    total = float(np.sum(evals))

    scale = float(np.max(np.abs(F))) ** 2 + 1.0
    if total < 1e-12 * scale:
        return PcaBasis(channel_id, mean, np.zeros((tau, 0)), np.zeros(0), total, inertia_target)

    inertia = np.cumsum(evals) / total
    p = int(np.searchsorted(inertia, inertia_target - _INERTIA_SLACK) + 1)
    p = min(p, tau)
    basis = _fix_signs(evecs[:, :p].copy())
    return PcaBasis(channel_id, mean, basis, evals[:p].copy(), total, inertia_target)


def project(basis: PcaBasis, curve) -> np.ndarray:
    """Coefficients of ``curve`` (or each row of a matrix of curves)."""
    f = np.asarray(curve, dtype=float)
    if f.shape[-1] != basis.mean_curve.size:
        raise ShapeError(
            f"curve length {f.shape[-1]} does not match basis length {basis.mean_curve.size}")
    return (f - basis.mean_curve) @ basis.basis


def reconstruct(basis: PcaBasis, coefficients) -> np.ndarray:
    alpha = np.asarray(coefficients, dtype=float)
    if alpha.shape[-1] != basis.n_components:
        raise ShapeError(
            f"expected {basis.n_components} coefficients, got {alpha.shape[-1]}")
    return basis.mean_curve + alpha @ basis.basis.T


@dataclass(frozen=True)
class ProjectedInputs:
    """PCA coefficients of R scenarios, one R x p_i block per channel."""

    bases: tuple
    coefficients: tuple
    _stacked: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.bases) != len(self.coefficients):
            raise ShapeError("one coefficient block per basis is required")
        blocks = []
        n = None
        for b, c in zip(self.bases, self.coefficients):
            c = np.asarray(c, dtype=float)
            if c.ndim == 1:
                c = c[None, :]
            if c.ndim != 2 or c.shape[1] != b.n_components:
                raise ShapeError(f"coefficient block of shape {c.shape} for p={b.n_components}")
            if n is None:
                n = c.shape[0]
            elif c.shape[0] != n:
                raise ShapeError("coefficient blocks have different row counts")
            blocks.append(c)
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "coefficients", tuple(blocks))
        stacked = np.hstack(blocks) if blocks else np.zeros((0, 0))
        stacked.setflags(write=False)
        object.__setattr__(self, "_stacked", stacked)

    @property
    def n_scenarios(self) -> int:
        return self._stacked.shape[0]

    @property
    def p_vector(self) -> list:
        return [b.n_components for b in self.bases]

    @property
    def stacked(self) -> np.ndarray:
        """R x sum(p) matrix of concatenated coefficients."""
        return self._stacked

    @property
    def column_channel(self) -> np.ndarray:
        """Channel index of each column of :attr:`stacked`."""
        return np.repeat(np.arange(len(self.bases)), self.p_vector)

    def row(self, r) -> list:
        return [c[r] for c in self.coefficients]

    def subset(self, indices) -> "ProjectedInputs":
        idx = np.atleast_1d(np.asarray(indices, dtype=int))
        return ProjectedInputs(self.bases, tuple(c[idx] for c in self.coefficients))


def fit_projection(inputs: ScenarioInputs, inertia_target: float = 0.999) -> ProjectedInputs:
    """Fit one PCA basis per channel on ``inputs`` and project them."""
    bases = tuple(fit_pca(inputs.channel(q), inertia_target, cid)
                  for q, cid in enumerate(inputs.channels))
    return project_inputs(bases, inputs)


def project_inputs(bases, inputs: ScenarioInputs) -> ProjectedInputs:
    """Project every scenario of ``inputs`` with existing ``bases``."""
    if len(bases) != inputs.n_channels:
        raise ShapeError(f"{len(bases)} bases for {inputs.n_channels} channels")
    for b, cid in zip(bases, inputs.channels):
        if b.channel_id and b.channel_id != cid:
            raise ShapeError(f"basis for channel {b.channel_id!r} applied to {cid!r}")
    coefs = tuple(project(b, inputs.channel(q)) for q, b in enumerate(bases))
    return ProjectedInputs(tuple(bases), coefs)


def functional_distance_sq(a, b, lengthscales) -> float:
    """Squared length-scaled distance between two projected scenarios.

    ``a`` and ``b`` are sequences of per-channel coefficient vectors.
    """
    ell = np.asarray(lengthscales, dtype=float)
    if np.any(~np.isfinite(ell)) or np.any(ell <= 0):
        raise ParameterError(f"length-scales must be positive, got {ell}")
    if len(a) != len(b) or len(a) != ell.size:
        raise ShapeError("scenarios and length-scales must have the same number of channels")
    total = 0.0
    for ai, bi, li in zip(a, b, ell):
        ai = np.asarray(ai, dtype=float)
        bi = np.asarray(bi, dtype=float)
        if ai.shape != bi.shape:
            raise ShapeError("coefficient vectors have different lengths")
        d = ai - bi
        total += float(d @ d) / (li * li)
    return total


def grid_step(grid) -> float:
    """Spacing of a uniform grid (raises on non-uniform grids)."""
    g = np.asarray(grid, dtype=float)
    steps = np.diff(g)
    if steps.size == 0:
        raise ShapeError("grid needs at least two points")
    if np.max(np.abs(steps - steps.mean())) > 1e-9 * max(abs(steps.mean()), 1e-300):
        raise DataError("grid is not uniformly spaced")
    return float(steps.mean())


def grid_lengthscales(lengthscales, grid) -> np.ndarray:
    """Convert integral-scale length-scales to unit-weight grid units.

    With spacing ``dt``, the grid sum of squared differences approximates the
    integral divided by ``dt``, so the equivalent length-scale is
    ``ell / sqrt(dt)``.
    """
    return np.asarray(lengthscales, dtype=float) / np.sqrt(grid_step(grid))


def preprocess_cartesian(magnitude, direction_deg):
    """Nautical (magnitude, direction) to Cartesian ``(m sin th, m cos th)``."""
    m = np.asarray(magnitude, dtype=float)
    if np.any(m < 0):
        raise DataError("magnitudes must be nonnegative")
    theta = np.deg2rad(np.asarray(direction_deg, dtype=float))
    x, y = m * np.sin(theta), m * np.cos(theta)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def derive_swl(msl, tide, surge):
    """Still water level MSL + tide + surge."""
    msl, tide, surge = (np.asarray(v, dtype=float) for v in (msl, tide, surge))
    if not (msl.shape == tide.shape == surge.shape):
        raise ShapeError("msl, tide and surge must have the same length")
    return msl + tide + surge
