import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spatfgp.design import (GridMapStack, compute_efp, kmeans, maximin_lhd, min_distance,
                            random_lhd, scalar_summaries, select_doe, select_scenarios)
from spatfgp.errors import ParameterError, ShapeError
from spatfgp.funspace import ScenarioInputs


def blobs(rng, n=10, sep=1.0, spread=0.05):
    a = rng.normal(0.0, spread, (n, 2))
    b = rng.normal(0.0, spread, (n, 2)) + [sep, 0.0]
    return np.vstack([a, b])


def best_two_partition(X):
    """Exhaustive minimum within-cluster sum of squares over all 2-partitions."""
    n = X.shape[0]
    codes = np.arange(1, 2 ** (n - 1))               # point 0 always in cluster 0
    lab = ((codes[:, None] >> np.arange(n - 1)) & 1).astype(float)
    lab = np.hstack([np.zeros((lab.shape[0], 1)), lab])
    n1 = lab.sum(1)
    s1 = lab @ X
    s0 = X.sum(0) - s1
    cost = (X ** 2).sum() - (s1 ** 2).sum(1) / n1 - (s0 ** 2).sum(1) / (n - n1)
    i = int(np.argmin(cost))
    return float(cost[i]), lab[i].astype(int)


# --- EFP ----------------------------------------------------------------------


def test_efp_examples():
    loc = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    vals = np.array([[0.2, 0.0, 1.0], [0.0, 0.0, 0.3], [0.1, 0.0, 0.1], [0.0, 0.0, 2.0]])
    np.testing.assert_array_equal(compute_efp(GridMapStack(loc, vals)), [0.5, 0.0, 1.0])
    np.testing.assert_array_equal(compute_efp(GridMapStack(loc, vals), wet_threshold=0.15), [0.25, 0.0, 0.75])
    with pytest.raises(ShapeError):
        GridMapStack(loc, np.zeros((2, 4)))


@given(arrays(np.float64, (5, 6), elements=st.floats(0, 3)))
def test_efp_in_unit_interval(values):
    loc = np.column_stack([np.arange(6.0), np.zeros(6)])
    e = compute_efp(GridMapStack(loc, values))
    assert np.all((e >= 0) & (e <= 1))
    np.testing.assert_array_equal(compute_efp(GridMapStack(loc, np.zeros_like(values))), 0.0)


# --- k-means ---------------------------------------------------------------------


def test_kmeans_examples(rng):
    X = rng.random((12, 3))
    full = kmeans(X, 12, seed=1)
    assert full.inertia == 0.0
    np.testing.assert_array_equal(np.sort(full.labels), np.arange(12))
    one = kmeans(X, 1, seed=1)
    np.testing.assert_allclose(one.centroids[0], X.mean(axis=0), rtol=1e-14)
    with pytest.raises(ParameterError):
        kmeans(X, 13)
    with pytest.raises(ParameterError):
        kmeans(X, 0)


@pytest.mark.parametrize("seed", range(5))
def test_kmeans_two_blobs_matches_exhaustive_oracle(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    X = blobs(rng)
    km = kmeans(X, 2, seed=seed)
    cost, labels = best_two_partition(X)
    assert km.inertia == pytest.approx(cost, rel=1e-12)
    same = np.array_equal(km.labels, labels) or np.array_equal(km.labels, 1 - labels)
    assert same
    assert len(set(km.labels[:10])) == 1 and len(set(km.labels[10:])) == 1


@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_kmeans_inertia_nonincreasing_and_deterministic(seed, k):
    rng = np.random.Generator(np.random.Philox(seed))
    X = rng.random((30, 2))
    a = kmeans(X, k, seed=seed)
    assert np.all(np.diff(a.inertia_history) <= 1e-12)
    b = kmeans(X, k, seed=seed)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    np.testing.assert_array_equal(a.labels, b.labels)


# --- select_doe -------------------------------------------------------------------


def strip(n=30):
    loc = np.column_stack([np.linspace(0, 1, n), np.zeros(n)])
    efp = np.where(np.arange(n) % 3 == 0, 0.7, 0.2)
    efp[:3] = 0.0
    return loc, efp


def test_select_doe_count_and_mandatory():
    loc, efp = strip()
    mand = [0, 5, 5]
    res = select_doe(loc, efp, 3, 4, mandatory=mand, seed=2)
    assert res.size == 3 + 4 + 2
    assert len(set(res.indices.tolist())) == res.size
    assert {0, 5} <= set(res.indices.tolist())
    assert np.sum(res.labels == 1) == 3 and np.sum(res.labels == 2) == 4
    assert np.all(efp[res.indices[res.labels == 1]] >= 0.4)
    sel2 = efp[res.indices[res.labels == 2]]
    assert np.all((sel2 > 0) & (sel2 < 0.4))


def test_select_doe_single_central_point():
    n = 21
    loc = np.column_stack([np.linspace(0, 1, n), np.zeros(n)])
    efp = np.full(n, 0.2)
    res = select_doe(loc, efp, 0, 1)
    feats = np.column_stack([loc[:, 0], efp])
    expected = int(np.argmin(np.linalg.norm(feats - feats.mean(0), axis=1)))
    assert res.indices.tolist() == [expected] == [10]


def test_select_doe_errors():
    loc, efp = strip()
    with pytest.raises(ParameterError, match="split"):
        select_doe(loc, efp, 2, 2, efp_split=0.9)
    with pytest.raises(ParameterError):
        select_doe(loc, np.zeros_like(efp), 1, 1)
    with pytest.raises(ParameterError):
        select_doe(loc, efp, 1, 1, mandatory=[99])


@given(st.integers(0, 10 ** 6), st.integers(0, 5), st.integers(0, 5),
       st.lists(st.integers(0, 59), max_size=4))
def test_select_doe_no_duplicates(seed, k1, k2, mand):
    rng = np.random.Generator(np.random.Philox(seed))
    loc = rng.random((60, 2))
    efp = rng.choice([0.0, 0.1, 0.3, 0.5, 0.8], 60)
    efp[:6] = [0.1, 0.2, 0.3, 0.5, 0.6, 0.9]
    n1 = np.sum((efp >= 0.4) & ~np.isin(np.arange(60), mand))
    n2 = np.sum((efp > 0) & (efp < 0.4) & ~np.isin(np.arange(60), mand))
    if k1 > n1 or k2 > n2:
        return
    res = select_doe(loc, efp, k1, k2, mandatory=mand, seed=seed)
    assert len(set(res.indices.tolist())) == res.size == k1 + k2 + len(set(mand))
    again = select_doe(loc, efp, k1, k2, mandatory=mand, seed=seed)
    np.testing.assert_array_equal(res.indices, again.indices)


# --- Latin hypercubes -----------------------------------------------------------------


def stratified(design):
    n = design.shape[0]
    return all(sorted(np.floor(design[:, d] * n).astype(int)) == list(range(n))
               for d in range(design.shape[1]))


def test_lhd_examples():
    d = maximin_lhd(2, 1, seed=0)
    assert sorted(np.floor(d[:, 0] * 2)) == [0, 1]
    assert stratified(maximin_lhd(5, 2, seed=3))
    with pytest.raises(ParameterError):
        maximin_lhd(0, 2)


def test_lhd_is_best_candidate():
    best, cands = maximin_lhd(10, 2, restarts=25, seed=4, return_candidates=True)
    assert len(cands) == 25
    assert all(min_distance(best) >= min_distance(c) for c in cands)
    np.testing.assert_array_equal(best, maximin_lhd(10, 2, restarts=25, seed=4))


@given(st.integers(1, 30), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_lhd_stratification_property(n, dims, seed):
    d = maximin_lhd(n, dims, restarts=3, seed=seed)
    assert d.shape == (n, dims)
    assert np.all((d >= 0) & (d < 1))
    assert stratified(d)
    assert stratified(random_lhd(n, dims, seed))


# --- scenario selection --------------------------------------------------------------------


def test_scalar_summaries_examples():
    grid = np.linspace(0, 1, 37)
    curves = np.stack([np.stack([np.full(37, 2.5), grid]), np.stack([np.full(37, 1.0), 2 * grid])])
    raw = scalar_summaries(ScenarioInputs(("c", "t"), grid, curves), standardize=False)
    np.testing.assert_allclose(raw[0], [2.5, 2.5, 1.0, 0.5], rtol=1e-14)
    z = scalar_summaries(ScenarioInputs(("c", "t"), grid, np.random.default_rng(0).random((9, 2, 37))))
    np.testing.assert_allclose(z.mean(0), 0.0, atol=1e-12)
    np.testing.assert_allclose(z.std(0), 1.0, rtol=1e-12)


def test_select_scenarios_examples(rng):
    X = rng.random((8, 3))
    np.testing.assert_array_equal(np.sort(select_scenarios(X, 8)), np.arange(8))
    first = select_scenarios(X, 3, seed=1)
    second = select_scenarios(X, 3, seed=1, exclude=first)
    assert not set(first) & set(second)
    with pytest.raises(ParameterError):
        select_scenarios(X, 6, exclude=first)


def test_select_scenarios_one_per_cluster(rng):
    X = blobs(rng, n=5, sep=5.0)
    for seed in range(5):
        picks = select_scenarios(X, 2, seed=seed)
        assert sorted(p // 5 for p in picks) == [0, 1]
        for p in picks:
            members = X[(p // 5) * 5:(p // 5) * 5 + 5]
            dist = np.linalg.norm(members - members.mean(0), axis=1)
            assert p % 5 == int(np.argmin(dist))
