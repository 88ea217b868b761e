"""Separable functional x spatial Gaussian-process emulator.

Two inference paths share one model type:

* ``kron``: R scenarios observed at the same S locations. The covariance is
  ``K_f kron K_x`` and is only ever handled through its factors.
* ``dense``: arbitrary (scenario, location) tuples, with an optional nugget.
  The N x N covariance is formed and factorized directly.

The spatial variance is profiled out of the likelihood during fitting, and
the length-scales are searched in log space with a derivative-free local
optimizer and several seeded restarts.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (DataError, FactorizationError, FitError, NumericalError,
                     ParameterError, ShapeError)
from .funspace import (ProjectedInputs, ScenarioInputs, fit_projection,
                       project_inputs)
from .kernels import (FunctionalKernelSpec, KernelKind, SpatialKernelSpec,
                      cross_functional, cross_spatial, gram_functional,
                      gram_spatial)
from .kronlin import (CholeskyFactor, _clamp_variance, cholesky, kron_logdet,
                      kron_posterior_batch, kron_tri_solve_matrix)
from .metrics import MetricReport, metric_report

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
# returned to the optimizer when a factorization fails
_PENALTY = 1e30
# queries per block when assembling cross-covariances
_CHUNK = 2048


@dataclass(frozen=True)
class Hyperparameters:
    functional_lengthscales: tuple
    spatial_lengthscales: tuple
    spatial_variance: float = 1.0
    functional_kind: KernelKind = KernelKind.MATERN52
    spatial_kind: KernelKind = KernelKind.MATERN52

    def __post_init__(self):
        # validation lives in the kernel specs
        f = self.functional_spec
        s = self.spatial_spec
        object.__setattr__(self, "functional_lengthscales", f.lengthscales)
        object.__setattr__(self, "spatial_lengthscales", s.lengthscales)
        object.__setattr__(self, "spatial_variance", s.variance)
        object.__setattr__(self, "functional_kind", f.kind)
        object.__setattr__(self, "spatial_kind", s.kind)

    @property
    def functional_spec(self) -> FunctionalKernelSpec:
        return FunctionalKernelSpec(self.functional_kind, self.functional_lengthscales)

    @property
    def spatial_spec(self) -> SpatialKernelSpec:
        return SpatialKernelSpec(self.spatial_kind, self.spatial_lengthscales, self.spatial_variance)

    def replace(self, **changes) -> "Hyperparameters":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "functional_lengthscales": list(self.functional_lengthscales),
            "spatial_lengthscales": list(self.spatial_lengthscales),
            "spatial_variance": self.spatial_variance,
            "functional_kind": self.functional_kind.value,
            "spatial_kind": self.spatial_kind.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            tuple(d["functional_lengthscales"]),
            tuple(d["spatial_lengthscales"]),
            float(d.get("spatial_variance", 1.0)),
            KernelKind.parse(d.get("functional_kind", "matern52")),
            KernelKind.parse(d.get("spatial_kind", "matern52")),
        )


def _as_locations(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1 and x.size == 2:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != 2:
        raise ShapeError(f"locations must be an S x 2 matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite location coordinates")
    return x


@dataclass(frozen=True)
class TensorTrainingSet:
    """R scenarios observed at the same S locations (``observations`` is R x S)."""

    projected: ProjectedInputs
    locations: np.ndarray
    observations: np.ndarray
    inputs: ScenarioInputs | None = None
    inertia_target: float = 0.999

    def __post_init__(self):
        loc = _as_locations(self.locations)
        Y = np.asarray(self.observations, dtype=float)
        if Y.ndim != 2 or Y.shape != (self.projected.n_scenarios, loc.shape[0]):
            raise ShapeError(
                f"observations shape {Y.shape} does not match "
                f"({self.projected.n_scenarios}, {loc.shape[0]})")
        if not np.all(np.isfinite(Y)):
            raise DataError("non-finite observations")
        if self.inputs is not None and self.inputs.n_scenarios != Y.shape[0]:
            raise ShapeError("raw inputs and observations have different scenario counts")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "observations", Y)

    @classmethod
    def build(cls, inputs: ScenarioInputs, locations, observations,
              inertia_target: float = 0.999, bases=None) -> "TensorTrainingSet":
        """Project ``inputs`` (fitting new PCA bases unless ``bases`` is given)."""
        projected = (fit_projection(inputs, inertia_target) if bases is None
                     else project_inputs(bases, inputs))
        return cls(projected, locations, observations, inputs, inertia_target)

    @property
    def n_scenarios(self) -> int:
        return self.observations.shape[0]

    @property
    def n_locations(self) -> int:
        return self.observations.shape[1]

    @property
    def n_observations(self) -> int:
        return self.observations.size

    def subset(self, indices, refit_bases: bool = True) -> "TensorTrainingSet":
        idx = np.atleast_1d(np.asarray(indices, dtype=int))
        if self.inputs is not None and refit_bases:
            return TensorTrainingSet.build(self.inputs.subset(idx), self.locations,
                                           self.observations[idx], self.inertia_target)
        sub_inputs = self.inputs.subset(idx) if self.inputs is not None else None
        return TensorTrainingSet(self.projected.subset(idx), self.locations,
                                 self.observations[idx], sub_inputs, self.inertia_target)


@dataclass(frozen=True)
class DenseTrainingSet:
    """N tuples (scenario index, location, observation) without tensor structure."""

    projected: ProjectedInputs
    scenario_index: np.ndarray
    locations: np.ndarray
    observations: np.ndarray
    noise_variance: float = 0.0
    inputs: ScenarioInputs | None = None

    def __post_init__(self):
        idx = np.asarray(self.scenario_index, dtype=int).ravel()
        loc = _as_locations(self.locations)
        y = np.asarray(self.observations, dtype=float).ravel()
        if not (idx.size == loc.shape[0] == y.size) or y.size < 1:
            raise ShapeError("scenario_index, locations and observations must have the same nonzero length")
        if np.any(idx < 0) or np.any(idx >= self.projected.n_scenarios):
            raise ShapeError("scenario index out of range")
        if not np.all(np.isfinite(y)):
            raise DataError("non-finite observations")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ParameterError("noise variance must be nonnegative")
        object.__setattr__(self, "scenario_index", idx)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "observations", y)

    @classmethod
    def from_tensor(cls, training: TensorTrainingSet, noise_variance: float = 0.0) -> "DenseTrainingSet":
        R, S = training.observations.shape
        return cls(training.projected, np.repeat(np.arange(R), S),
                   np.tile(training.locations, (R, 1)), training.observations.ravel(),
                   noise_variance, training.inputs)

    @property
    def n_observations(self) -> int:
        return self.observations.size

    @property
    def n_scenarios(self) -> int:
        return self.projected.n_scenarios


@dataclass
class FitDiagnostics:
    log_likelihood: float
    n_evaluations: int = 0
    converged: bool = True
    restarts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "log_likelihood": self.log_likelihood,
            "n_evaluations": self.n_evaluations,
            "converged": self.converged,
            "restarts": self.restarts,
        }


@dataclass
class MapPrediction:
    mean: np.ndarray
    variance: np.ndarray
    clamped: np.ndarray

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self):
        return self.mean.size


def _apply_clamp(mean, variance, clamp):
    mean = np.asarray(mean, dtype=float)
    flags = (mean < 0) if clamp else np.zeros(mean.shape, dtype=bool)
    if clamp:
        mean = np.where(flags, 0.0, mean)
    return MapPrediction(mean, np.asarray(variance, dtype=float), flags)


# ---------------------------------------------------------------------------
# likelihood


def _kron_factors(hyp: Hyperparameters, training: TensorTrainingSet, variance: float):
    Kf = gram_functional(hyp.functional_spec, training.projected)
    Kx = gram_spatial(replace(hyp.spatial_spec, variance=variance), training.locations)
    Lf = cholesky(Kf, "K_f")
    Lx = cholesky(Kx, "K_x")
    return Lf, Lx


def _dense_covariance(hyp: Hyperparameters, training: DenseTrainingSet, variance: float):
    Kf = gram_functional(hyp.functional_spec, training.projected)
    spatial = replace(hyp.spatial_spec, variance=variance)
    K = gram_spatial(spatial, training.locations)
    K *= Kf[np.ix_(training.scenario_index, training.scenario_index)]
    if training.noise_variance > 0:
        K[np.diag_indices_from(K)] += training.noise_variance
    return K


def _kron_terms(hyp, training, variance):
    Lf, Lx = _kron_factors(hyp, training, variance)
    A = kron_tri_solve_matrix(Lf, Lx, training.observations)
    return float(np.sum(A * A)), kron_logdet(Lf, Lx), (Lf, Lx, A)


def _dense_terms(hyp, training, variance):
    L = cholesky(_dense_covariance(hyp, training, variance), "K")
    a = L.solve_lower(training.observations)
    return float(a @ a), L.logdet(), (L, a)


def _terms(hyp, training, variance):
    if isinstance(training, TensorTrainingSet):
        return _kron_terms(hyp, training, variance)
    if isinstance(training, DenseTrainingSet):
        return _dense_terms(hyp, training, variance)
    raise TypeError(f"unsupported training set {type(training).__name__}")


def log_marginal_likelihood(hyp: Hyperparameters, training) -> float:
    """Gaussian log density of the training observations under ``hyp``."""
    try:
        z, logdet, _ = _terms(hyp, training, hyp.spatial_variance)
    except FactorizationError as exc:
        raise FitError(f"likelihood factorization failed: {exc}", hyp) from exc
    n = training.n_observations
    return -0.5 * z - 0.5 * logdet - 0.5 * n * LOG_2PI


def profiled_log_likelihood(hyp: Hyperparameters, training):
    """Likelihood maximized over the spatial variance.

    Returns ``(loglik, variance_hat)``. Only valid without a nugget.
    """
    z1, logdet1, _ = _terms(hyp, training, 1.0)
    n = training.n_observations
    var = max(z1 / n, 1e-300)
    ll = -0.5 * n - 0.5 * (logdet1 + n * math.log(var)) - 0.5 * n * LOG_2PI
    return ll, var


# ---------------------------------------------------------------------------
# fitted model


@dataclass
class FittedModel:
    hyperparameters: Hyperparameters
    training: TensorTrainingSet | DenseTrainingSet
    path: str
    factors: tuple
    diagnostics: FitDiagnostics

    @classmethod
    def condition(cls, hyp: Hyperparameters, training, diagnostics=None) -> "FittedModel":
        """Factorize and cache everything needed for prediction."""
        try:
            z, logdet, factors = _terms(hyp, training, hyp.spatial_variance)
        except FactorizationError as exc:
            raise FitError(f"cannot condition model: {exc}", hyp) from exc
        n = training.n_observations
        ll = -0.5 * z - 0.5 * logdet - 0.5 * n * LOG_2PI
        path = "kron" if isinstance(training, TensorTrainingSet) else "dense"
        if diagnostics is None:
            diagnostics = FitDiagnostics(ll)
        return cls(hyp, training, path, factors, diagnostics)

    @property
    def bases(self):
        return self.training.projected.bases

    def log_likelihood(self) -> float:
        return log_marginal_likelihood(self.hyperparameters, self.training)

    def _project(self, inputs) -> ProjectedInputs:
        if isinstance(inputs, ProjectedInputs):
            if inputs.p_vector != self.training.projected.p_vector:
                raise ShapeError("projected queries do not match the training bases")
            return inputs
        if not isinstance(inputs, ScenarioInputs):
            raise TypeError("queries must be ScenarioInputs or ProjectedInputs")
        ref = self.training.inputs
        if ref is not None:
            if inputs.channels != ref.channels:
                raise DataError(f"query channels {inputs.channels} differ from training {ref.channels}")
            if inputs.grid.shape != ref.grid.shape or not np.allclose(inputs.grid, ref.grid, rtol=0, atol=1e-12):
                raise DataError("query time grid differs from the training grid")
        for b in self.bases:
            if b.mean_curve.size != inputs.grid.size:
                raise ShapeError("query curves do not match the basis length")
        return project_inputs(self.bases, inputs)


def fitted_from_hyperparameters(hyp, training) -> FittedModel:
    return FittedModel.condition(hyp, training)


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the derivative-free search.

    ``restarts`` is the total number of local searches: the first starts at
    the initial hyperparameters, the others at log-normal perturbations of
    them with standard deviation ``start_spread``.
    """

    max_evaluations: int = 600
    restarts: int = 3
    seed: int = 0
    tol: float = 1e-4
    method: str = "COBYLA"
    rhobeg: float = 0.5
    start_spread: float = 0.5
    bound_factor: float = 100.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def default_hyperparameters(training, functional_kind=KernelKind.MATERN52,
                            spatial_kind=KernelKind.MATERN52) -> Hyperparameters:
    """Scale-free starting point.

    Functional length-scales are the median pairwise distance of each
    channel's coefficients; spatial length-scales are half the diagonal of the
    locations' bounding box.
    """
    proj = training.projected
    ell_f = []
    for c in proj.coefficients:
        if c.shape[1] == 0 or c.shape[0] < 2:
            ell_f.append(1.0)
            continue
        diff = c[:, None, :] - c[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))[np.triu_indices(c.shape[0], 1)]
        med = float(np.median(d))
        ell_f.append(med if med > 0 else 1.0)
    loc = training.locations
    diag = float(np.linalg.norm(loc.max(axis=0) - loc.min(axis=0)))
    ell_x = diag / 2 if diag > 0 else 1.0
    y = training.observations
    var = float(np.mean(np.square(y))) or 1.0
    return Hyperparameters(tuple(ell_f), (ell_x, ell_x), var, functional_kind, spatial_kind)


class _Objective:
    """Negative (profiled) log-likelihood over log-parameters, with bookkeeping."""

    def __init__(self, training, init: Hyperparameters, free_channels):
        self.training = training
        self.init = init
        self.free = np.asarray(free_channels, dtype=int)
        self.with_variance = isinstance(training, DenseTrainingSet) and training.noise_variance > 0
        self.n_evals = 0
        self.best = (-np.inf, None, None)

    def theta0(self) -> np.ndarray:
        parts = [np.log(np.asarray(self.init.functional_lengthscales)[self.free]),
                 np.log(self.init.spatial_lengthscales)]
        if self.with_variance:
            parts.append([math.log(self.init.spatial_variance)])
        return np.concatenate(parts)

    def unpack(self, theta) -> Hyperparameters:
        theta = np.asarray(theta, dtype=float)
        ell_f = np.asarray(self.init.functional_lengthscales, dtype=float).copy()
        nf = self.free.size
        ell_f[self.free] = np.exp(theta[:nf])
        ell_x = np.exp(theta[nf:nf + 2])
        var = math.exp(theta[nf + 2]) if self.with_variance else 1.0
        return self.init.replace(functional_lengthscales=tuple(ell_f),
                                 spatial_lengthscales=tuple(ell_x), spatial_variance=var)

    def loglik(self, theta):
        hyp = self.unpack(theta)
        if self.with_variance:
            return log_marginal_likelihood(hyp, self.training), hyp
        ll, var = profiled_log_likelihood(hyp, self.training)
        return ll, hyp.replace(spatial_variance=var)

    def __call__(self, theta) -> float:
        self.n_evals += 1
        if not np.all(np.isfinite(theta)):
            return _PENALTY
        try:
            ll, hyp = self.loglik(theta)
        except (NumericalError, ParameterError, FitError):
            return _PENALTY
        if not np.isfinite(ll):
            return _PENALTY
        if ll > self.best[0]:
            self.best = (ll, hyp, np.array(theta, dtype=float))
        return -ll


def fit_ml(training, init: Hyperparameters | None = None,
           config: OptimizerConfig | None = None) -> FittedModel:
    """Maximum-likelihood fit of the length-scales (and the spatial variance)."""
    config = config or OptimizerConfig()
    if config.restarts < 1 or config.max_evaluations < 1:
        raise ParameterError("restarts and max_evaluations must be at least 1")
    init = init or default_hyperparameters(training)
    if len(init.functional_lengthscales) != len(training.projected.bases):
        raise ShapeError("init has the wrong number of functional length-scales")
    free = [i for i, p in enumerate(training.projected.p_vector) if p > 0]
    objective = _Objective(training, init, free)
    theta0 = objective.theta0()
    span = math.log(config.bound_factor)
    bounds = [(t - span, t + span) for t in theta0]
    rng = np.random.Generator(np.random.Philox(config.seed))

    table = []
    converged_any = False
    for k in range(config.restarts):
        start = theta0 if k == 0 else np.clip(
            theta0 + config.start_spread * rng.standard_normal(theta0.size),
            [b[0] for b in bounds], [b[1] for b in bounds])
        before = objective.n_evals
        if theta0.size == 0:
            value = objective(start)
            res_x, ok = start, True
        else:
            res = minimize(objective, start, method=config.method, bounds=bounds,
                           options={"maxiter": config.max_evaluations, "rhobeg": config.rhobeg,
                                    "tol": config.tol})
            res_x, value, ok = res.x, float(res.fun), bool(res.success)
        converged_any |= ok
        table.append({
            "start": objective.unpack(start).to_dict(),
            "final": objective.unpack(res_x).to_dict(),
            "log_likelihood": None if value >= _PENALTY else -value,
            "n_evaluations": objective.n_evals - before,
            "converged": ok,
        })
        logger.debug("restart %d: loglik=%s evals=%d", k, table[-1]["log_likelihood"],
                     table[-1]["n_evaluations"])

    best_ll, best_hyp, _ = objective.best
    if best_hyp is None:
        raise FitError("every restart failed to factorize the covariance", init)
    diag = FitDiagnostics(best_ll, objective.n_evals, converged_any, table)
    model = FittedModel.condition(best_hyp, training, diag)
    return model


# ---------------------------------------------------------------------------
# prediction


def _kron_predict(model: FittedModel, proj: ProjectedInputs, locations, pairwise: bool):
    hyp = model.hyperparameters
    Lf, Lx, A = model.factors
    tr = model.training
    Kf_star = cross_functional(hyp.functional_spec, tr.projected, proj)       # R x m
    spatial = hyp.spatial_spec
    means, variances = [], []
    m = locations.shape[0]
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        Kx_star = cross_spatial(spatial, tr.locations, locations[lo:hi])       # S x c
        kf = Kf_star[:, lo:hi] if pairwise else Kf_star
        mu, var = kron_posterior_batch(Lf, Lx, A, kf, Kx_star, spatial.variance, pairwise=pairwise)
        means.append(mu)
        variances.append(var)
    axis = 0 if pairwise else 1
    return np.concatenate(means, axis=axis), np.concatenate(variances, axis=axis)


def _dense_predict(model: FittedModel, proj: ProjectedInputs, scen_of_query, locations):
    hyp = model.hyperparameters
    L, a = model.factors
    tr = model.training
    Kf_star = cross_functional(hyp.functional_spec, tr.projected, proj)       # R_train x m_scen
    spatial = hyp.spatial_spec
    m = locations.shape[0]
    mean = np.empty(m)
    var = np.empty(m)
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        K = cross_spatial(spatial, tr.locations, locations[lo:hi])             # N x c
        K *= Kf_star[tr.scenario_index][:, scen_of_query[lo:hi]]
        B = L.solve_lower(K)
        mean[lo:hi] = B.T @ a
        var[lo:hi] = _clamp_variance(spatial.variance - np.sum(B * B, axis=0), spatial.variance)
    return mean, var


def predict(model: FittedModel, inputs, locations, clamp: bool = False) -> MapPrediction:
    """Posterior mean and variance for paired queries.

    Query ``j`` is scenario ``j`` of ``inputs`` (raw curves or an existing
    projection) at ``locations[j]``. A single scenario is broadcast to every
    location.
    """
    proj = model._project(inputs)
    loc = _as_locations(locations)
    if proj.n_scenarios == 1 and loc.shape[0] > 1:
        return _predict_grid(model, proj, loc, clamp)
    if proj.n_scenarios != loc.shape[0]:
        raise ShapeError(f"{proj.n_scenarios} query scenarios for {loc.shape[0]} locations")
    if model.path == "kron":
        mean, var = _kron_predict(model, proj, loc, pairwise=True)
    else:
        mean, var = _dense_predict(model, proj, np.arange(loc.shape[0]), loc)
    return _apply_clamp(mean, var, clamp)


def _predict_grid(model, proj, loc, clamp):
    if model.path == "kron":
        mean, var = _kron_predict(model, proj, loc, pairwise=False)
        mean, var = mean[0], var[0]
    else:
        mean, var = _dense_predict(model, proj, np.zeros(loc.shape[0], dtype=int), loc)
    return _apply_clamp(mean, var, clamp)


def forecast_map(model: FittedModel, new_scenario, locations=None, clamp: bool = False) -> MapPrediction:
    """Predict the whole map of one unseen scenario.

    ``new_scenario`` is a one-scenario :class:`ScenarioInputs` or a Q x tau
    array on the training grid; ``locations`` defaults to the training
    locations (kron path).
    """
    if not isinstance(new_scenario, (ScenarioInputs, ProjectedInputs)):
        ref = model.training.inputs
        if ref is None:
            raise DataError("raw curves need a model trained with raw inputs")
        curves = np.asarray(new_scenario, dtype=float)
        if curves.ndim == 2:
            curves = curves[None]
        if curves.shape[1:] != ref.curves.shape[1:]:
            raise DataError(f"scenario shape {curves.shape[1:]} does not match the training grid "
                            f"{ref.curves.shape[1:]}")
        new_scenario = ScenarioInputs(ref.channels, ref.grid, curves)
    proj = model._project(new_scenario)
    if proj.n_scenarios != 1:
        raise ShapeError("forecast_map takes exactly one scenario")
    loc = model.training.locations if locations is None else _as_locations(locations)
    return _predict_grid(model, proj, loc, clamp)


# ---------------------------------------------------------------------------
# leave-one-out


@dataclass(frozen=True)
class LooConfig:
    reuse_hyperparameters: bool = False
    clamp: bool = False
    c_levels: tuple = (1.0, 2.0, 3.0)
    optimizer: OptimizerConfig = OptimizerConfig()
    init: Hyperparameters | None = None
    functional_kind: KernelKind = KernelKind.MATERN52
    spatial_kind: KernelKind = KernelKind.MATERN52
    pooled_variance: float | None = None
    refit_bases: bool = True
    workers: int = 1


@dataclass
class LooFold:
    index: int
    prediction: MapPrediction | None
    metrics: MetricReport | None
    hyperparameters: Hyperparameters | None
    error: str | None = None


@dataclass
class LooResult:
    folds: list
    n_fits: int
    pooled_variance: float | None

    def _values(self, key):
        out = []
        for f in self.folds:
            if f.metrics is None:
                continue
            v = f.metrics.ca.get(key) if isinstance(key, float) else getattr(f.metrics, key)
            if v is not None:
                out.append(v)
        return np.asarray(out, dtype=float)

    def median(self, key) -> float:
        """Median over folds of ``"rmse"``, ``"q2"``, ``"q2_pooled"`` or a CA level (float)."""
        vals = self._values(key)
        return float(np.median(vals)) if vals.size else float("nan")

    def summary(self) -> dict:
        out = {"n_folds": len(self.folds), "n_failed": sum(f.error is not None for f in self.folds),
               "n_fits": self.n_fits, "pooled_variance": self.pooled_variance,
               "median_rmse": self.median("rmse"), "median_q2": self.median("q2"),
               "median_q2_pooled": self.median("q2_pooled")}
        levels = sorted({c for f in self.folds if f.metrics for c in f.metrics.ca})
        for c in levels:
            out[f"median_ca_{c:g}"] = self.median(float(c))
        return out


def pooled_variance(observations, wet_threshold: float = 0.0) -> float | None:
    """Variance of all values at locations that are ever above ``wet_threshold``."""
    Y = np.asarray(observations, dtype=float)
    wet = np.any(Y > wet_threshold, axis=0)
    vals = Y[:, wet] if np.any(wet) else Y
    v = float(np.var(vals))
    return v if v > 0 else None


def loo(dataset: TensorTrainingSet, config: LooConfig | None = None) -> LooResult:
    """Leave-one-scenario-out forecasts of every map in ``dataset``."""
    config = config or LooConfig()
    R = dataset.n_scenarios
    if R < 2:
        raise ParameterError("leave-one-out needs at least two scenarios")
    pv = config.pooled_variance if config.pooled_variance is not None else pooled_variance(dataset.observations)

    def initial(training):
        if config.init is not None:
            return config.init
        return default_hyperparameters(training, config.functional_kind, config.spatial_kind)

    shared = None
    n_fits = 0
    if config.reuse_hyperparameters:
        shared = fit_ml(dataset, initial(dataset), config.optimizer).hyperparameters
        n_fits = 1

    def run(r):
        train_idx = np.delete(np.arange(R), r)
        try:
            training = dataset.subset(train_idx, refit_bases=config.refit_bases)
            if shared is not None:
                model = FittedModel.condition(shared, training)
            else:
                model = fit_ml(training, initial(training), config.optimizer)
            query = (dataset.inputs.subset([r]) if dataset.inputs is not None and config.refit_bases
                     else dataset.projected.subset([r]))
            pred = forecast_map(model, query, dataset.locations, clamp=config.clamp)
            rep = metric_report(dataset.observations[r], pred.mean, pred.sd, config.c_levels, pv)
            return LooFold(r, pred, rep, model.hyperparameters)
        except (NumericalError, DataError, ParameterError) as exc:
            logger.warning("fold %d failed: %s", r, exc)
            return LooFold(r, None, None, None, str(exc))

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            folds = list(pool.map(run, range(R)))
    else:
        folds = [run(r) for r in range(R)]
    if shared is None:
        n_fits = sum(f.error is None for f in folds)
    return LooResult(sorted(folds, key=lambda f: f.index), n_fits, pv)
