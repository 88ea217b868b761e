import numpy as np
import pytest

from spatfgp.design import compute_efp
from spatfgp.errors import ParameterError, ShapeError
from spatfgp.funspace import ScenarioInputs
from spatfgp.gp import Hyperparameters
from spatfgp.kernels import KernelKind, gram_spatial
from spatfgp.synth import (COASTAL_CHANNELS, COASTAL_POINTS_OF_INTEREST, CoastalConfig,
                           SynthConfig, coastal_inputs, coastal_maps, gen_inputs, gen_maps,
                           grid_locations, make_rng, nearest_indices, preset_forecast,
                           preset_multioutput, raw_functional_gram, sample_gp_curve)

import oracles

RELEASED_SEEDS = (0, 1, 2)


# --- moment checks (shared with the acceptance suite) ------------------------------


def curve_moment_check(seed, n=2000):
    """Sample mean within 4 SE and a sample covariance within 5 SE of the kernel."""
    grid = np.linspace(0, 1, 11)
    mean = np.sin(2 * np.pi * grid)
    var, ell = 0.7, 0.3
    draws = sample_gp_curve("matern52", var, ell, grid, mean, seed=seed, size=n)
    ok_mean = bool(np.all(np.abs(draws.mean(0) - mean) <= 4 * np.sqrt(var / n)))
    K = oracles.kernel_value("matern52", np.abs(grid[:, None] - grid[None, :]) / ell, var)
    C = np.cov(draws.T, bias=True)
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K ** 2) / n)
    ok_cov = bool(np.all(np.abs(C - K) <= 5 * se))
    return ok_mean and ok_cov


def map_moment_check(seed, n=5000):
    """R=3, S=16 joint draws: mean and covariance of the 48-vector within 5 SE of K_f kron K_x."""
    rng = make_rng(seed, 7)
    grid = np.linspace(0, 1, 6)
    inputs = ScenarioInputs(("a", "b"), grid, rng.standard_normal((3, 2, 6)))
    loc = grid_locations(4)
    hyp = Hyperparameters((2.0, 3.0), (0.4, 0.6), 1.3)
    stack = gen_maps(inputs, loc, hyp, seed=seed, n_draws=n)
    Y = stack.values.reshape(n, 3 * 16)                   # scenario-major rows
    K = np.kron(raw_functional_gram(inputs, hyp), gram_spatial(hyp.spatial_spec, loc))
    d = np.diag(K)
    ok_mean = bool(np.all(np.abs(Y.mean(0)) <= 5 * np.sqrt(d / n)))
    C = Y.T @ Y / n                                       # known zero mean
    se = np.sqrt((np.outer(d, d) + K ** 2) / n)
    ok_cov = bool(np.all(np.abs(C - K) <= 5 * se))
    return ok_mean and ok_cov


@pytest.mark.parametrize("seed", RELEASED_SEEDS)
def test_curve_moments(seed):
    assert curve_moment_check(seed)


@pytest.mark.parametrize("seed", RELEASED_SEEDS)
def test_map_moments(seed):
    assert map_moment_check(seed)


# --- sample_gp_curve ----------------------------------------------------------


def test_vanishing_variance_returns_mean():
    grid = np.linspace(0, 1, 9)
    mean = grid ** 2
    np.testing.assert_allclose(sample_gp_curve("se", 1e-16, 0.3, grid, mean, seed=4), mean, atol=1e-6)


def test_curve_errors_and_determinism():
    grid = np.linspace(0, 1, 5)
    with pytest.raises(ParameterError):
        sample_gp_curve("se", 0.0, 0.3, grid)
    with pytest.raises(ShapeError):
        sample_gp_curve("se", 1.0, 0.3, grid, np.zeros(4))
    a = sample_gp_curve("exp", 1.0, 0.3, grid, seed=9, size=3)
    np.testing.assert_array_equal(a, sample_gp_curve("exp", 1.0, 0.3, grid, seed=9, size=3))
    assert not np.array_equal(a, sample_gp_curve("exp", 1.0, 0.3, grid, seed=10, size=3))


# --- gen_inputs ---------------------------------------------------------------


def test_config_defaults_and_round_trip():
    cfg = SynthConfig()
    assert cfg.replicate_variance == 2.5e-3 and cfg.replicate_lengthscale == 0.8
    assert cfg.mean_variances == (0.5,) * 8
    np.testing.assert_allclose(cfg.mean_lengthscales, [(i + 1) / 10 for i in range(8)])
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    assert preset_multioutput(3).grid_shape == (100, 100)
    assert preset_forecast(3).n_scenarios == 1001 and preset_forecast(3).centered
    with pytest.raises(ParameterError):
        SynthConfig(n_channels=2, mean_variances=(1.0,))


def test_single_replicate():
    inputs = gen_inputs(SynthConfig(n_channels=3, n_scenarios=1))
    assert inputs.curves.shape == (1, 3, 37)


def test_inputs_are_deterministic():
    cfg = SynthConfig(n_channels=2, n_scenarios=4, seed=5)
    np.testing.assert_array_equal(gen_inputs(cfg).curves, gen_inputs(cfg).curves)


def test_larger_mean_lengthscale_gives_smoother_means():
    tv = np.zeros(8)
    for seed in range(20):
        curves = gen_inputs(SynthConfig(n_scenarios=5, seed=seed)).curves
        mu = curves.mean(axis=0)                    # replicate noise is small
        tv += np.abs(np.diff(mu, axis=1)).sum(axis=1)
    assert np.all(np.diff(tv) < 0)


def test_replicates_vary_little_around_mean():
    curves = gen_inputs(SynthConfig(n_scenarios=200, seed=1)).curves
    sd = curves.std(axis=0).mean()
    assert sd == pytest.approx(np.sqrt(2.5e-3), rel=0.2)


# --- gen_maps -----------------------------------------------------------------


def test_identical_scenarios_give_identical_maps():
    grid = np.linspace(0, 1, 5)
    inputs = ScenarioInputs(("a",), grid, np.tile(grid, (4, 1, 1)))
    stack = gen_maps(inputs, grid_locations(5), Hyperparameters((1.0,), (0.3, 0.3)), seed=2)
    np.testing.assert_allclose(stack.values, np.tile(stack.values[0], (4, 1)), atol=1e-3)


def test_short_functional_lengthscale_decorrelates_maps():
    grid = np.linspace(0, 1, 5)
    rng = np.random.default_rng(0)
    inputs = ScenarioInputs(("a",), grid, rng.standard_normal((2, 1, 5)))
    n = 2000
    stack = gen_maps(inputs, grid_locations(3), Hyperparameters((1e-6,), (0.3, 0.3)), seed=3, n_draws=n)
    Y = stack.values.reshape(n, 2, 9)
    r = np.array([np.corrcoef(Y[:, 0, s], Y[:, 1, s])[0, 1] for s in range(9)])
    assert np.all(np.abs(r) <= 5 / np.sqrt(n))


def test_maps_are_deterministic_and_seed_dependent():
    cfg = SynthConfig(n_channels=2, n_scenarios=3, grid_shape=(4, 4))
    inputs = gen_inputs(cfg)
    a = gen_maps(inputs, cfg.locations(), cfg.map_hyperparameters(), seed=1).values
    b = gen_maps(inputs, cfg.locations(), cfg.map_hyperparameters(), seed=1).values
    c = gen_maps(inputs, cfg.locations(), cfg.map_hyperparameters(), seed=2).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_grid_locations_order():
    loc = grid_locations(3, 2)
    np.testing.assert_array_equal(loc[:4], [[0, 0], [0.5, 0], [1, 0], [0, 1]])


def test_lhd_layout():
    cfg = SynthConfig(layout="lhd", n_locations=35, seed=4)
    loc = cfg.locations()
    assert loc.shape == (35, 2)
    np.testing.assert_array_equal(loc, cfg.locations())


# --- coastal generator ------------------------------------------------------------


def test_coastal_generator():
    cfg = CoastalConfig(n_scenarios=6, grid_shape=(12, 12), seed=3)
    inputs = coastal_inputs(cfg)
    assert inputs.channels == COASTAL_CHANNELS
    assert inputs.curves.shape == (6, 8, 37)
    maps = coastal_maps(inputs, cfg)
    assert maps.values.shape == (6, 144)
    assert np.all(maps.values >= 0)
    efp = compute_efp(maps)
    assert np.any(efp == 0) and np.any(efp > 0)
    np.testing.assert_array_equal(maps.values, coastal_maps(coastal_inputs(cfg), cfg).values)
    idx = nearest_indices(maps.locations, COASTAL_POINTS_OF_INTEREST)
    assert len(set(idx.tolist())) == 3
    np.testing.assert_allclose(maps.locations[idx], COASTAL_POINTS_OF_INTEREST, atol=0.05)
