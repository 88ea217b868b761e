import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spatfgp.errors import DataError, ParameterError, ShapeError
from spatfgp.funspace import ScenarioInputs, fit_projection, grid_lengthscales
from spatfgp.kernels import (CoregionalizationView, FunctionalKernelSpec, KernelKind,
                             SpatialKernelSpec, cross_functional, functional_corr,
                             gram_functional, gram_spatial, separable_cov, spatial_cov,
                             stationary_value)
from spatfgp.kronlin import cholesky

import oracles

KINDS = list(KernelKind)


def projected(rng, R=5, Q=2, tau=6):
    grid = np.linspace(0, 1, tau)
    return fit_projection(ScenarioInputs(tuple(f"c{i}" for i in range(Q)), grid,
                                         rng.standard_normal((R, Q, tau))), 0.999)


# --- stationary_value --------------------------------------------------------


def test_stationary_examples():
    assert stationary_value(KernelKind.SQUARED_EXPONENTIAL, 0.0, 2.0) == 2.0
    assert stationary_value(KernelKind.EXPONENTIAL, 1.0, 1.0) == pytest.approx(math.exp(-1), rel=1e-15)
    assert stationary_value(KernelKind.MATERN52, 0.27603, 1.0) == pytest.approx(0.9409, abs=5e-5)
    assert stationary_value(KernelKind.MATERN52, 0.27603) == pytest.approx(oracles.matern52_scalar(0.27603), rel=1e-14)


def test_stationary_errors():
    with pytest.raises(ParameterError):
        stationary_value("se", -0.1)
    with pytest.raises(ParameterError):
        stationary_value("se", 0.1, 0.0)
    with pytest.raises(ParameterError):
        stationary_value("cubic", 0.1)


@pytest.mark.parametrize("kind", KINDS)
def test_stationary_matches_bessel_oracle(kind):
    r = np.linspace(0, 5, 101)
    ours = np.array([stationary_value(kind, x, 1.7) for x in r])
    np.testing.assert_allclose(ours, oracles.kernel_value(kind.value, r, 1.7), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@given(st.floats(0, 20), st.floats(1e-6, 5))
def test_stationary_monotone_and_positive(kind, r, dr):
    a = stationary_value(kind, r)
    b = stationary_value(kind, r + dr)
    assert 0 < a <= 1
    assert b < a or (b == a == 0) or b <= a and b < 1e-300


def test_zero_distance_guard():
    assert stationary_value("matern52", 1e-16, 3.0) == 3.0


# --- functional ---------------------------------------------------------------


def test_functional_corr_examples(rng):
    p = projected(rng)
    spec = FunctionalKernelSpec("matern52", (0.7, 1.3))
    assert functional_corr(spec, p.row(0), p.row(0)) == 1.0
    huge = FunctionalKernelSpec("matern52", (1e12, 1e12))
    assert functional_corr(huge, p.row(0), p.row(1)) == pytest.approx(1.0, abs=1e-12)


def test_exponential_monomial_correlation():
    grid = np.linspace(0, 1, 201)
    proj = fit_projection(ScenarioInputs(("f",), grid, np.stack([grid, grid ** 3])[:, None, :]), 1.0)
    spec = FunctionalKernelSpec("exp", tuple(grid_lengthscales([1.0], grid)))
    val = functional_corr(spec, proj.row(0), proj.row(1))
    expected = math.exp(-math.sqrt(oracles.l2_distance_sq(lambda t: t, lambda t: t ** 3)))
    assert expected == pytest.approx(0.7588, abs=1e-4)
    assert val == pytest.approx(expected, abs=1e-3)


@pytest.mark.parametrize("kind", KINDS)
def test_gram_functional_matches_elementwise(rng, kind):
    p = projected(rng, R=3)
    spec = FunctionalKernelSpec(kind, (0.9, 2.1))
    K = gram_functional(spec, p)
    loop = np.array([[functional_corr(spec, p.row(i), p.row(j)) for j in range(3)] for i in range(3)])
    np.testing.assert_allclose(K, loop, rtol=1e-13, atol=1e-15)
    cols = oracles.column_lengthscales(p.p_vector, spec.lengthscales)
    np.testing.assert_allclose(K, oracles.functional_gram(kind.value, p.stacked, p.stacked, cols),
                               rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_array_equal(np.diag(K), 1.0)
    assert np.all((K > 0) & (K <= 1))


def test_gram_functional_trivial_cases(rng):
    p = projected(rng, R=1)
    np.testing.assert_array_equal(gram_functional(FunctionalKernelSpec("se", (1.0, 1.0)), p), [[1.0]])
    grid = np.linspace(0, 1, 5)
    same = ScenarioInputs(("a",), grid, np.tile(rng.standard_normal(5), (4, 1, 1)))
    pi = fit_projection(same)
    np.testing.assert_array_equal(gram_functional(FunctionalKernelSpec("se", (1.0,)), pi), np.ones((4, 4)))


def test_cross_functional_shape_mismatch(rng):
    a = projected(rng, R=4, tau=6)
    b = projected(np.random.Generator(np.random.Philox(3)), R=4, tau=6)
    spec = FunctionalKernelSpec("se", (1.0, 1.0))
    if a.p_vector != b.p_vector:
        with pytest.raises(ShapeError):
            cross_functional(spec, a, b)
    with pytest.raises(ShapeError):
        cross_functional(FunctionalKernelSpec("se", (1.0,)), a, a)


# --- spatial ----------------------------------------------------------------


def test_spatial_examples():
    s = SpatialKernelSpec("se", (0.3, 0.5), 1.0)
    assert spatial_cov(s, [0.2, 0.2], [0.2, 0.2]) == 1.0
    assert spatial_cov(s, [0, 0], [0.3, 0]) == pytest.approx(math.exp(-0.5), rel=1e-15)
    aniso = SpatialKernelSpec("matern52", (0.1, 0.2), 1.0)
    assert spatial_cov(aniso, [0, 0], [0, 0.15]) > spatial_cov(aniso, [0, 0], [0.15, 0])
    with pytest.raises(ParameterError):
        SpatialKernelSpec("se", (0.3,), 1.0)
    with pytest.raises(ParameterError):
        SpatialKernelSpec("se", (0.3, 0.1), -1.0)
    with pytest.raises(DataError):
        spatial_cov(s, [0, np.nan], [0, 0])


@pytest.mark.parametrize("kind", KINDS)
def test_gram_spatial_matches_oracle(rng, kind):
    x = rng.random((4, 2))
    s = SpatialKernelSpec(kind, (0.3, 0.6), 1.7)
    K = gram_spatial(s, x)
    np.testing.assert_allclose(K, oracles.spatial_gram(kind.value, x, x, s.lengthscales, 1.7), rtol=1e-12)
    loop = np.array([[spatial_cov(s, a, b) for b in x] for a in x])
    np.testing.assert_allclose(K, loop, rtol=1e-13)
    np.testing.assert_array_equal(np.diag(K), 1.7)


def test_gram_spatial_trivial_cases():
    s = SpatialKernelSpec("matern32", (0.3, 0.6), 2.5)
    np.testing.assert_array_equal(gram_spatial(s, [[0.1, 0.2]]), [[2.5]])
    K = gram_spatial(s, [[0.1, 0.2], [0.1, 0.2]])
    np.testing.assert_array_equal(K, np.full((2, 2), 2.5))
    assert np.linalg.matrix_rank(K) == 1


@pytest.mark.parametrize("seed", range(50))
def test_sampled_positive_semidefinite(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    kind = KINDS[seed % 4]
    R, S = int(rng.integers(1, 13)), int(rng.integers(1, 13))
    p = projected(rng, R=R)
    Kf = gram_functional(FunctionalKernelSpec(kind, tuple(0.2 + 3 * rng.random(2))), p)
    Kx = gram_spatial(SpatialKernelSpec(kind, tuple(0.05 + rng.random(2)), 1.0 + rng.random()), rng.random((S, 2)))
    for K in (Kf, Kx):
        L = cholesky(K, jitter=True)
        assert L.jitter_applied <= 1e-8 * np.mean(np.diag(K))


# --- separable and coregionalization ------------------------------------------


def test_separable_examples(rng):
    p = projected(rng, R=3)
    f = FunctionalKernelSpec("matern52", (1.1, 0.8))
    s = SpatialKernelSpec("matern52", (0.2, 0.3), 1.9)
    x, y = np.array([0.1, 0.2]), np.array([0.7, 0.4])
    assert separable_cov(f, s, (p.row(0), x), (p.row(0), x)) == 1.9
    assert separable_cov(f, s, (p.row(1), x), (p.row(1), y)) == spatial_cov(s, x, y)
    val = separable_cov(f, s, (p.row(0), x), (p.row(2), y))
    assert val == pytest.approx(functional_corr(f, p.row(0), p.row(2)) * spatial_cov(s, x, y), rel=1e-14)
    assert val == pytest.approx(separable_cov(f, s, (p.row(2), y), (p.row(0), x)), rel=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_product_structure_matches_kron(rng, kind):
    p = projected(rng, R=3)
    f = FunctionalKernelSpec(kind, (1.1, 0.8))
    s = SpatialKernelSpec(kind, (0.2, 0.3), 1.3)
    x = rng.random((4, 2))
    K = np.kron(gram_functional(f, p), gram_spatial(s, x))
    for i in range(3):
        for a in range(4):
            for j in range(3):
                for b in range(4):
                    assert K[i * 4 + a, j * 4 + b] == pytest.approx(
                        separable_cov(f, s, (p.row(i), x[a]), (p.row(j), x[b])), rel=1e-13, abs=1e-300)


def test_coregionalization_view(rng):
    p = projected(rng, R=4)
    f = FunctionalKernelSpec("matern52", (1.1, 0.8))
    s = SpatialKernelSpec("matern52", (0.2, 0.3), 1.3)
    view = CoregionalizationView(gram_functional(f, p))
    assert all(view.b(i, i) == 1.0 for i in range(4))
    assert view.b(1, 3) == view.b(3, 1)
    x, y = rng.random(2), rng.random(2)
    assert view.kernel(s, 0, 1, x, y) == pytest.approx(separable_cov(f, s, (p.row(0), x), (p.row(1), y)), rel=1e-14)
    with pytest.raises(DataError):
        CoregionalizationView([[1.0, 0.5], [0.4, 1.0]])


def test_kind_parse_aliases():
    assert KernelKind.parse("RBF") is KernelKind.SQUARED_EXPONENTIAL
    assert KernelKind.parse("matern5/2") is KernelKind.MATERN52
    assert KernelKind.parse("exponential") is KernelKind.EXPONENTIAL
