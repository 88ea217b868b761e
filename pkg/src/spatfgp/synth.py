"""Synthetic functional inputs and jointly sampled map stacks.

Random numbers come from numpy's counter-based Philox generator. A seed is
expanded into independent streams with ``SeedSequence(seed, spawn_key=(k,))``:

* stream 0: functional inputs (channel by channel; for each channel the mean
  curve first, then all replicates at once),
* stream 1: map draws,
* stream 2: spatial designs (LHD layouts).

Within a stream, draws happen in a fixed documented order, so the same
``(seed, config)`` gives the same data on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .design import GridMapStack, maximin_lhd
from .errors import ParameterError, ShapeError
from .funspace import ScenarioInputs, grid_lengthscales, preprocess_cartesian
from .gp import Hyperparameters
from .kernels import KernelKind, cross_spatial, gram_spatial
from .kronlin import cholesky, kron_apply

STREAM_INPUTS = 0
STREAM_MAPS = 1
STREAM_DESIGN = 2


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``stream`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


def _as_rng(seed_or_rng, stream=0):
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(seed_or_rng, stream)


def grid_locations(n1: int, n2: int | None = None) -> np.ndarray:
    """Equispaced ``n1 x n2`` grid on the unit square, x1 varying fastest."""
    n2 = n1 if n2 is None else n2
    x1, x2 = np.meshgrid(np.linspace(0, 1, n1), np.linspace(0, 1, n2))
    return np.column_stack([x1.ravel(), x2.ravel()])


def _curve_gram(kind, variance, lengthscale, grid):
    t = np.asarray(grid, dtype=float)[:, None]
    K = _backend.gram(t, t, [1.0 / lengthscale], KernelKind.parse(kind).code, variance)
    return 0.5 * (K + K.T)


def sample_gp_curve(kind, variance: float, lengthscale: float, grid, mean_curve=None,
                    seed=0, size: int | None = None) -> np.ndarray:
    """Draw ``mean_curve + L xi`` on ``grid`` (``size`` draws as rows if given)."""
    if variance <= 0 or lengthscale <= 0:
        raise ParameterError("variance and length-scale must be positive")
    grid = np.asarray(grid, dtype=float)
    mean = np.zeros(grid.size) if mean_curve is None else np.asarray(mean_curve, dtype=float)
    if mean.shape != grid.shape:
        raise ShapeError("mean curve and grid lengths differ")
    L = cholesky(_curve_gram(kind, variance, lengthscale, grid), "curve Gram").lower
    rng = _as_rng(seed, STREAM_INPUTS)
    n = 1 if size is None else int(size)
    xi = rng.standard_normal((grid.size, n))
    draws = (mean[:, None] + L @ xi).T
    return draws[0] if size is None else draws


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Input curves: channel ``i`` has mean curve ``mu_i ~ GP(0, k_i)`` with
    ``(mean_variances[i], mean_lengthscales[i])`` and replicates
    ``f ~ GP(mu_i, k_o)`` with ``(replicate_variance, replicate_lengthscale)``.
    With ``centered=True`` the replicates are drawn directly from
    ``GP(0, k_i)``. Map functional length-scales are in integral units on the
    time domain and are converted to grid units before use.
    """

    n_channels: int = 8
    n_scenarios: int = 20
    n_times: int = 37
    input_kind: KernelKind = KernelKind.MATERN52
    replicate_variance: float = 2.5e-3
    replicate_lengthscale: float = 0.8
    mean_variances: tuple | None = None
    mean_lengthscales: tuple | None = None
    centered: bool = False
    spatial_kind: KernelKind = KernelKind.MATERN52
    spatial_variance: float = 1.0
    spatial_lengthscales: tuple = (0.2, 0.2)
    functional_kind: KernelKind = KernelKind.MATERN52
    functional_lengthscales: tuple | None = None
    grid_shape: tuple = (10, 10)
    layout: str = "grid"
    n_locations: int = 100
    seed: int = 0

    def __post_init__(self):
        q = self.n_channels
        if q < 1 or self.n_scenarios < 1 or self.n_times < 2:
            raise ParameterError("need Q >= 1, R >= 1 and at least 2 time stamps")
        if self.mean_variances is None:
            object.__setattr__(self, "mean_variances", tuple([0.5] * q))
        if self.mean_lengthscales is None:
            object.__setattr__(self, "mean_lengthscales", tuple((i + 1) / 10 for i in range(q)))
        if self.functional_lengthscales is None:
            object.__setattr__(self, "functional_lengthscales", tuple([2.0] * q))
        for name in ("mean_variances", "mean_lengthscales", "functional_lengthscales"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != q or min(vals) <= 0:
                raise ParameterError(f"{name} needs {q} positive values")
            object.__setattr__(self, name, vals)
        if self.layout not in ("grid", "lhd"):
            raise ParameterError("layout must be 'grid' or 'lhd'")
        for name in ("input_kind", "spatial_kind", "functional_kind"):
            object.__setattr__(self, name, KernelKind.parse(getattr(self, name)))

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_times)

    def map_hyperparameters(self) -> Hyperparameters:
        """True map kernel with functional length-scales in grid units."""
        return Hyperparameters(
            tuple(grid_lengthscales(self.functional_lengthscales, self.grid)),
            tuple(self.spatial_lengthscales), self.spatial_variance,
            self.functional_kind, self.spatial_kind)

    def locations(self) -> np.ndarray:
        if self.layout == "grid":
            return grid_locations(*self.grid_shape)
        return maximin_lhd(self.n_locations, 2, restarts=50, seed=make_rng(self.seed, STREAM_DESIGN))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("input_kind", "spatial_kind", "functional_kind"):
            d[k] = d[k].value
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)


def gen_inputs(config: SynthConfig) -> ScenarioInputs:
    rng = make_rng(config.seed, STREAM_INPUTS)
    grid = config.grid
    R = config.n_scenarios
    curves = np.empty((R, config.n_channels, grid.size))
    for i in range(config.n_channels):
        var_mu, ell_mu = config.mean_variances[i], config.mean_lengthscales[i]
        if config.centered:
            curves[:, i] = sample_gp_curve(config.input_kind, var_mu, ell_mu, grid, seed=rng, size=R)
        else:
            mu = sample_gp_curve(config.input_kind, var_mu, ell_mu, grid, seed=rng)
            curves[:, i] = sample_gp_curve(config.input_kind, config.replicate_variance,
                                           config.replicate_lengthscale, grid, mu, seed=rng, size=R)
    channels = tuple(f"f{i + 1}" for i in range(config.n_channels))
    return ScenarioInputs(channels, grid, curves)


def raw_functional_gram(inputs: ScenarioInputs, hyp: Hyperparameters) -> np.ndarray:
    """Functional correlation matrix on the raw grid curves (no truncation)."""
    R, Q, tau = inputs.curves.shape
    if len(hyp.functional_lengthscales) != Q:
        raise ShapeError(f"{len(hyp.functional_lengthscales)} length-scales for {Q} channels")
    X = inputs.curves.reshape(R, Q * tau)
    w = np.repeat(1.0 / np.asarray(hyp.functional_lengthscales), tau)
    K = _backend.gram(X, X, w, hyp.functional_kind.code, 1.0)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def gen_maps(inputs: ScenarioInputs, locations, true_hyperparameters: Hyperparameters,
             seed=0, n_draws: int | None = None) -> GridMapStack:
    """Joint draw of R maps under ``K_f kron K_x``.

    The R x S standard-normal matrix is coloured with ``kron_apply(L_f, L_x)``;
    the RS x RS covariance is never formed. ``n_draws`` stacks independent
    draws (used by the moment checks); the result then has
    ``n_draws * R`` rows.
    """
    loc = np.asarray(locations, dtype=float)
    hyp = true_hyperparameters
    Lf = cholesky(raw_functional_gram(inputs, hyp), "K_f").lower
    Lx = cholesky(gram_spatial(hyp.spatial_spec, loc), "K_x").lower
    R, S = Lf.shape[0], Lx.shape[0]
    rng = _as_rng(seed, STREAM_MAPS)
    draws = 1 if n_draws is None else int(n_draws)
    out = np.empty((draws, R, S))
    for d in range(draws):
        xi = rng.standard_normal(R * S)
        out[d] = kron_apply(Lf, Lx, xi).reshape(R, S)
    return GridMapStack(loc, out.reshape(draws * R, S))


def flood_depths(stack: GridMapStack, trend=None, scale: float = 1.0) -> GridMapStack:
    """Nonnegative flood-like maps ``max(0, scale * values + trend(x))``."""
    offset = 0.0 if trend is None else np.asarray(trend(stack.locations), dtype=float)
    return GridMapStack(stack.locations, np.maximum(0.0, scale * stack.values + offset))


# ---------------------------------------------------------------------------
# presets


_PER_CHANNEL = ("mean_variances", "mean_lengthscales", "functional_lengthscales")


def _preset(base: SynthConfig, overrides: dict) -> SynthConfig:
    if overrides.get("n_channels", base.n_channels) != base.n_channels:
        # per-channel defaults follow the new channel count unless given
        overrides = {**{k: None for k in _PER_CHANNEL}, **overrides}
    return replace(base, **overrides)


def preset_multioutput(seed: int = 0, **overrides) -> SynthConfig:
    """Multioutput learning study: Q=8, R=20, hierarchical inputs, 100x100 maps."""
    base = SynthConfig(n_channels=8, n_scenarios=20, grid_shape=(100, 100), seed=seed)
    return _preset(base, overrides)


def preset_forecast(seed: int = 0, **overrides) -> SynthConfig:
    """Forecasting study: Q=8 centered channels, R=1001, 10x10 grid."""
    base = SynthConfig(n_channels=8, n_scenarios=1001, centered=True, grid_shape=(10, 10), seed=seed)
    return _preset(base, overrides)


COASTAL_CHANNELS = ("MSL", "T", "S", "Tp", "Hs_x", "Hs_y", "U_x", "U_y")


@dataclass(frozen=True)
class CoastalConfig:
    """Coastal-like scenario generator (synthetic stand-in for real forcings)."""

    n_scenarios: int = 40
    n_times: int = 37
    grid_shape: tuple = (30, 30)
    functional_lengthscale: float = 8.0
    spatial_lengthscales: tuple = (0.15, 0.3)
    latent_scale: float = 0.6
    trend_intercept: float = 0.2
    trend_slope: float = 1.5
    seed: int = 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["grid_shape"] = list(self.grid_shape)
        d["spatial_lengthscales"] = list(self.spatial_lengthscales)
        return d


def coastal_inputs(config: CoastalConfig) -> ScenarioInputs:
    """Eight forcing channels with wave and wind directions already Cartesian.

    Raw channels (MSL, tide, surge, Tp, Hs, Dp, U, Du) are simulated as GP
    curves around plausible levels; (Hs, Dp) and (U, Du) are then converted
    with :func:`preprocess_cartesian`.
    """
    rng = make_rng(config.seed, STREAM_INPUTS)
    R, grid = config.n_scenarios, np.linspace(0.0, 1.0, config.n_times)
    tide_phase = np.cos(np.pi * (grid - 0.5))

    def draw(var, ell, mean):
        return sample_gp_curve("matern52", var, ell, grid, mean, seed=rng, size=R)

    msl = draw(1e-4, 2.0, np.full(grid.size, 0.2))
    tide = draw(0.02, 0.8, 2.0 * tide_phase)
    surge = draw(0.04, 0.4, np.full(grid.size, 0.3))
    tp = draw(2.0, 0.5, np.full(grid.size, 12.0))
    hs = np.abs(draw(0.5, 0.4, np.full(grid.size, 3.0)))
    dp = draw(200.0, 0.5, np.full(grid.size, 250.0))
    u = np.abs(draw(9.0, 0.4, np.full(grid.size, 12.0)))
    du = draw(400.0, 0.5, np.full(grid.size, 240.0))
    hs_x, hs_y = preprocess_cartesian(hs, dp)
    u_x, u_y = preprocess_cartesian(u, du)
    curves = np.stack([msl, tide, surge, tp, hs_x, hs_y, u_x, u_y], axis=1)
    return ScenarioInputs(COASTAL_CHANNELS, grid, curves)


def coastal_maps(inputs: ScenarioInputs, config: CoastalConfig) -> GridMapStack:
    """Flood-depth maps: a separable GP draw plus a seaward-deepening trend, floored at 0.

    The functional length-scale is applied to channels standardized by their
    pooled standard deviation, so every forcing contributes comparably.
    """
    loc = grid_locations(*config.grid_shape)
    sd = inputs.curves.std(axis=(0, 2))
    sd[sd == 0] = 1.0
    scaled = ScenarioInputs(inputs.channels, inputs.grid, inputs.curves / sd[None, :, None])
    ell = grid_lengthscales([config.functional_lengthscale] * inputs.n_channels, inputs.grid)
    hyp = Hyperparameters(tuple(ell), tuple(config.spatial_lengthscales), 1.0)
    latent = gen_maps(scaled, loc, hyp, seed=config.seed)
    # low-lying seaward strip (small x1) floods more often
    trend = lambda x: config.trend_intercept - config.trend_slope * x[:, 0]  # noqa: E731
    return flood_depths(latent, trend=trend, scale=config.latent_scale)


# locations that must always be in a coastal design (e.g. monitored sites)
COASTAL_POINTS_OF_INTEREST = ((0.05, 0.5), (0.1, 0.2), (0.1, 0.8))


def nearest_indices(locations, points) -> np.ndarray:
    """Index of the nearest row of ``locations`` for each point."""
    loc = np.asarray(locations, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = ((loc[None, :, :] - pts[:, None, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1)
