"""Design-of-experiments utilities for spatial locations and scenarios."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ParameterError, ShapeError
from .funspace import ScenarioInputs


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GridMapStack:
    """R maps observed on G grid locations (``values`` is R x G)."""

    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        val = np.atleast_2d(np.asarray(self.values, dtype=float))
        if loc.ndim != 2 or loc.shape[1] != 2:
            raise ShapeError("locations must be G x 2")
        if val.shape[1] != loc.shape[0]:
            raise ShapeError(f"values have {val.shape[1]} columns for {loc.shape[0]} locations")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    @property
    def n_maps(self) -> int:
        return self.values.shape[0]


def compute_efp(stack: GridMapStack, wet_threshold: float = 0.0) -> np.ndarray:
    """Empirical flooding probability: share of maps above ``wet_threshold``."""
    if stack.n_maps < 1:
        raise ShapeError("at least one map is required")
    return np.mean(stack.values > wet_threshold, axis=0)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list


def _greedy_seeding(X, k, rng):
    """Greedy k-means++: each step keeps the best of several D^2-weighted candidates."""
    n = X.shape[0]
    n_trials = 2 + int(math.log(k))
    centers = [int(rng.integers(n))]
    d2 = np.sum((X - X[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point coincides with a chosen center; take unused indices
            unused = np.setdiff1d(np.arange(n), centers)
            centers.append(int(unused[0]))
            continue
        cand = np.searchsorted(np.cumsum(d2), rng.random(n_trials) * total)
        cand = np.minimum(cand, n - 1)
        cand_d2 = np.minimum(d2[None, :], cdist(X[cand], X, "sqeuclidean"))
        best = int(np.argmin(cand_d2.sum(axis=1)))
        centers.append(int(cand[best]))
        d2 = cand_d2[best]
    return X[centers].copy()


def kmeans(points, k: int, seed=0, max_iter: int = 300, tol: float = 1e-9) -> KMeansResult:
    """Lloyd iterations from greedy k-means++ seeding; deterministic per seed."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ParameterError(f"k must satisfy 1 <= k <= n={n}, got {k}")
    rng = _rng(seed)
    C = _greedy_seeding(X, k, rng)
    history = []
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        D = cdist(X, C, "sqeuclidean")
        labels = np.argmin(D, axis=1)
        inertia = float(D[np.arange(n), labels].sum())
        history.append(inertia)
        newC = C.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                newC[j] = X[labels == j].mean(axis=0)
            else:
                # move an empty centroid onto the point farthest from its center
                far = int(np.argmax(D[np.arange(n), labels]))
                newC[j] = X[far]
        C = newC
        if len(history) > 1 and history[-2] - history[-1] <= tol * max(history[-2], 1.0):
            break
    D = cdist(X, C, "sqeuclidean")
    labels = np.argmin(D, axis=1)
    inertia = float(D[np.arange(n), labels].sum())
    if inertia < history[-1]:
        history.append(inertia)
    return KMeansResult(C, labels, inertia, it, history)


def _nearest_unused(candidates, X, centroids, used):
    """Index (into ``candidates``) of the nearest unused point to each centroid."""
    out = []
    D = cdist(centroids, X)
    for row in D:
        order = np.argsort(row, kind="stable")
        for j in order:
            if candidates[j] not in used:
                used.add(int(candidates[j]))
                out.append(int(candidates[j]))
                break
    return out


@dataclass
class DoeResult:
    indices: np.ndarray
    labels: np.ndarray
    mandatory: np.ndarray

    @property
    def size(self) -> int:
        return self.indices.size


def select_doe(locations, efp, kappa1: int, kappa2: int, efp_split: float = 0.4,
               mandatory=(), seed=0) -> DoeResult:
    """EFP-stratified k-means design.

    Class 1 holds wet locations with ``efp >= efp_split``, class 2 those with
    ``0 < efp < efp_split``. Each class is clustered on
    ``(x1, x2, EFP)`` with coordinates scaled to the unit square, and the
    location nearest each centroid is selected. Mandatory locations are
    excluded from clustering and appended at the end. Labels are 1, 2, or 0 for mandatory.
    """
    loc = np.asarray(locations, dtype=float)
    p = np.asarray(efp, dtype=float).ravel()
    if loc.ndim != 2 or loc.shape[1] != 2 or loc.shape[0] != p.size:
        raise ShapeError("locations must be G x 2 with one EFP value per location")
    if kappa1 < 0 or kappa2 < 0:
        raise ParameterError("cluster counts must be nonnegative")
    mand = np.asarray(list(mandatory), dtype=int).ravel()
    if np.any(mand < 0) or np.any(mand >= p.size):
        raise ParameterError("mandatory index out of range")

    wet = p > 0
    if not np.any(wet):
        raise ParameterError("no location has a nonzero EFP")
    lo = loc[wet].min(axis=0)
    span = loc[wet].max(axis=0) - lo
    span[span == 0] = 1.0
    feats = np.column_stack([(loc - lo) / span, p])

    rng = _rng(seed)
    # mandatory points are reserved first so the design always has
    # kappa1 + kappa2 + len(unique mandatory) distinct locations
    reserved = {int(m) for m in mand}
    classes = [(1, np.flatnonzero(p >= efp_split), kappa1),
               (2, np.flatnonzero(wet & (p < efp_split)), kappa2)]
    used: set = set(reserved)
    chosen, labels = [], []
    for label, members, kappa in classes:
        members = np.array([m for m in members if int(m) not in reserved], dtype=int)
        if kappa == 0:
            continue
        if members.size == 0:
            raise ParameterError(
                f"EFP class {label} is empty for split {efp_split}; try a different split")
        if kappa > members.size:
            raise ParameterError(f"class {label} has {members.size} locations, {kappa} clusters requested")
        km = kmeans(feats[members], kappa, seed=rng)
        picked = _nearest_unused(members, feats[members], km.centroids, used)
        chosen.extend(picked)
        labels.extend([label] * len(picked))
    for m in dict.fromkeys(int(m) for m in mand):
        chosen.append(m)
        labels.append(0)
    return DoeResult(np.asarray(chosen, dtype=int), np.asarray(labels, dtype=int), mand)


def random_lhd(n: int, dims: int, rng) -> np.ndarray:
    """One random Latin hypercube in [0, 1)^dims."""
    rng = _rng(rng)
    design = np.empty((n, dims))
    for d in range(dims):
        design[:, d] = (rng.permutation(n) + rng.random(n)) / n
    return design


def min_distance(design) -> float:
    design = np.asarray(design, dtype=float)
    if design.shape[0] < 2:
        return math.inf
    return float(pdist(design).min())


def maximin_lhd(n: int, dims: int, restarts: int = 50, seed=0, return_candidates: bool = False):
    """Best of ``restarts`` random Latin hypercubes under the maximin criterion."""
    if n < 1 or dims < 1 or restarts < 1:
        raise ParameterError("n, dims and restarts must be positive")
    rng = _rng(seed)
    best, best_d = None, -math.inf
    candidates = []
    for _ in range(restarts):
        cand = random_lhd(n, dims, rng)
        d = min_distance(cand)
        if return_candidates:
            candidates.append(cand)
        if d > best_d:
            best, best_d = cand, d
    return (best, candidates) if return_candidates else best


def scalar_summaries(inputs: ScenarioInputs, standardize: bool = True) -> np.ndarray:
    """Per-channel (max, mean) over time, as an R x 2Q feature matrix.

    Columns are standardized across scenarios unless ``standardize=False``;
    constant columns are centered only.
    """
    c = inputs.curves
    feats = np.empty((c.shape[0], 2 * c.shape[1]))
    feats[:, 0::2] = c.max(axis=2)
    feats[:, 1::2] = c.mean(axis=2)
    if standardize:
        mu = feats.mean(axis=0)
        sd = feats.std(axis=0)
        sd[sd == 0] = 1.0
        feats = (feats - mu) / sd
    return feats


def select_scenarios(features, k: int, seed=0, exclude=()) -> np.ndarray:
    """Pick ``k`` representative scenarios by k-means on ``features``.

    Rows listed in ``exclude`` are ignored, so repeated calls with the
    previous picks excluded enrich a learning set without duplicates.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ShapeError("features must be an R x d matrix")
    excluded = {int(i) for i in exclude}
    pool = np.array([i for i in range(X.shape[0]) if i not in excluded], dtype=int)
    if not (1 <= k <= pool.size):
        raise ParameterError(f"k must satisfy 1 <= k <= {pool.size}, got {k}")
    km = kmeans(X[pool], k, seed=seed)
    picked = _nearest_unused(pool, X[pool], km.centroids, set())
    return np.asarray(picked, dtype=int)
