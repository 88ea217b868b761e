"""Kronecker-structured Gaussian-process algebra.

Observations for R scenarios at S shared locations are held as an R x S matrix
``Y``. Flattened, they are ordered scenario-major (all S locations of scenario
1 first), which pairs with the dense covariance ``np.kron(K_f, K_x)``. The
same numbers read location-major (``Y.ravel(order="F")``) pair with
``np.kron(K_x, K_f)``. Nothing here ever builds an RS x RS matrix: every
operation works on the R x R and S x S factors and on R x S matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky as _cholesky, solve_triangular

from .errors import FactorizationError, NumericalConsistencyError, ShapeError

#: Flattening order of the R x S observation matrix.
SCENARIO_MAJOR = "C"

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter_applied: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def logdet(self) -> float:
        d = np.diag(self.lower)
        if np.any(d <= 0):
            raise FactorizationError("Cholesky factor has a nonpositive diagonal")
        return 2.0 * float(np.sum(np.log(d)))

    def solve_lower(self, b):
        return solve_triangular(self.lower, b, lower=True, check_finite=False)


def _lower(L):
    return L.lower if isinstance(L, CholeskyFactor) else np.asarray(L, dtype=float)


def cholesky(matrix, name: str = "matrix", jitter: bool = True) -> CholeskyFactor:
    """Lower Cholesky factor, retrying with escalating diagonal jitter.

    Jitter starts at ``1e-10 * mean(diag)`` and grows by 10 up to
    ``1e-4 * mean(diag)``.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise FactorizationError(f"{name} has non-finite entries")
    scale = np.max(np.abs(A), initial=0.0)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * max(scale, 1e-300):
        raise FactorizationError(f"{name} is not symmetric")
    try:
        return CholeskyFactor(_cholesky(A, lower=True, check_finite=False), 0.0)
    except np.linalg.LinAlgError:
        if not jitter:
            raise FactorizationError(f"{name} is not positive definite") from None
    mean_diag = float(np.mean(np.diag(A)))
    if mean_diag <= 0:
        raise FactorizationError(f"{name} has a nonpositive mean diagonal")
    eps = JITTER_START
    while eps <= JITTER_MAX * (1 + 1e-9):
        amount = eps * mean_diag
        try:
            L = _cholesky(A + amount * np.eye(A.shape[0]), lower=True, check_finite=False)
            return CholeskyFactor(L, amount)
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise FactorizationError(
        f"{name} is not positive definite even with jitter {JITTER_MAX:g} * mean(diag)")


def kron_apply(A, B, u) -> np.ndarray:
    """``(A kron B) @ u`` via ``V = B U A^T`` with column-indexed reshaping."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    u = np.asarray(u, dtype=float).ravel()
    M, N = A.shape
    P, Q = B.shape
    if u.size != N * Q:
        raise ShapeError(f"vector of length {u.size} does not match ({M}x{N}) kron ({P}x{Q})")
    U = u.reshape(N, Q).T          # Q x N, column n holds u[n*Q:(n+1)*Q]
    V = B @ U @ A.T                # P x M
    return V.T.ravel()


def _as_matrix(y, R, S):
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        if Y.size != R * S:
            raise ShapeError(f"observation vector of length {Y.size} does not match R*S={R * S}")
        return Y.reshape(R, S, order=SCENARIO_MAJOR)
    if Y.shape != (R, S):
        raise ShapeError(f"observation matrix of shape {Y.shape} does not match ({R}, {S})")
    return Y


def _check_factor(L, name):
    d = np.diag(L)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise FactorizationError(f"{name} is singular or has a nonpositive diagonal")


def kron_tri_solve_matrix(L_f, L_x, Y) -> np.ndarray:
    """``A = L_f^{-1} Y L_x^{-T}`` for an R x S observation matrix ``Y``."""
    Lf, Lx = _lower(L_f), _lower(L_x)
    _check_factor(Lf, "L_f")
    _check_factor(Lx, "L_x")
    Y = _as_matrix(Y, Lf.shape[0], Lx.shape[0])
    B = solve_triangular(Lf, Y, lower=True, check_finite=False)            # R x S
    return solve_triangular(Lx, B.T, lower=True, check_finite=False).T      # R x S


def kron_tri_solve(L_f, L_x, y) -> np.ndarray:
    """Whitened observations ``a`` with ``L a = y`` for the Kronecker factor ``L``.

    ``y`` is a scenario-major vector of length R*S (or an R x S matrix); the
    result has the same ordering.
    """
    return kron_tri_solve_matrix(L_f, L_x, y).ravel(order=SCENARIO_MAJOR)


def kron_quadratic(y, L_f, L_x) -> float:
    """``y^T K^{-1} y`` for ``K = K_f kron K_x`` (scenario-major ``y``)."""
    a = kron_tri_solve_matrix(L_f, L_x, y)
    return float(np.sum(a * a))


def kron_logdet(L_f, L_x) -> float:
    """``log|K| = S log|K_f| + R log|K_x|``."""
    Lf, Lx = _lower(L_f), _lower(L_x)
    _check_factor(Lf, "L_f")
    _check_factor(Lx, "L_x")
    R, S = Lf.shape[0], Lx.shape[0]
    return S * 2.0 * float(np.sum(np.log(np.diag(Lf)))) + R * 2.0 * float(np.sum(np.log(np.diag(Lx))))


def kron_posterior_mean(L_f, L_x, a, k_f_star, k_x_star) -> float:
    """Posterior mean ``b_f^T A b_x`` of one query."""
    Lf, Lx = _lower(L_f), _lower(L_x)
    A = _as_matrix(a, Lf.shape[0], Lx.shape[0])
    bf = solve_triangular(Lf, np.asarray(k_f_star, dtype=float), lower=True, check_finite=False)
    bx = solve_triangular(Lx, np.asarray(k_x_star, dtype=float), lower=True, check_finite=False)
    return float(bf @ A @ bx)


def _clamp_variance(c, prior, band=1e-10):
    c = np.asarray(c, dtype=float)
    prior = np.broadcast_to(np.asarray(prior, dtype=float), c.shape)
    if np.any(c < -band * prior):
        worst = float(np.min(c / prior))
        raise NumericalConsistencyError(
            f"posterior variance is negative beyond the clamp band ({worst:.3e} * prior)")
    return np.maximum(c, 0.0)


def kron_posterior_cov(L_f, L_x, k, k_f, k_x, k_f2=None, k_x2=None, clamp_variance=None) -> float:
    """Posterior covariance between two queries.

    ``k`` is the prior covariance of the pair, ``(k_f, k_x)`` and
    ``(k_f2, k_x2)`` the cross-covariance factors of each query with the
    training data. Omitting the second pair gives the variance of the first
    query, which is clamped at zero when it is negative within
    ``1e-10 * clamp_variance`` (default ``k``).
    """
    Lf, Lx = _lower(L_f), _lower(L_x)
    bf = solve_triangular(Lf, np.asarray(k_f, dtype=float), lower=True, check_finite=False)
    bx = solve_triangular(Lx, np.asarray(k_x, dtype=float), lower=True, check_finite=False)
    if k_f2 is None and k_x2 is None:
        c = float(k) - float(bx @ bx) * float(bf @ bf)
        return float(_clamp_variance(c, k if clamp_variance is None else clamp_variance))
    bf2 = bf if k_f2 is None else solve_triangular(Lf, np.asarray(k_f2, dtype=float), lower=True, check_finite=False)
    bx2 = bx if k_x2 is None else solve_triangular(Lx, np.asarray(k_x2, dtype=float), lower=True, check_finite=False)
    return float(k) - float(bx @ bx2) * float(bf @ bf2)


def kron_posterior_batch(L_f, L_x, A, K_f_star, K_x_star, prior_variance, pairwise=True):
    """Posterior means and variances for many queries.

    ``K_f_star`` is R x m_f and ``K_x_star`` S x m_x. With ``pairwise=True``
    (m_f == m_x) query j is (scenario column j, location column j); otherwise
    the full m_f x m_x grid of queries is evaluated. Memory stays at
    O(R*S + (R + S) * m).
    """
    Lf, Lx = _lower(L_f), _lower(L_x)
    A = _as_matrix(A, Lf.shape[0], Lx.shape[0])
    Bf = solve_triangular(Lf, np.atleast_2d(np.asarray(K_f_star, dtype=float).T).T,
                          lower=True, check_finite=False)
    Bx = solve_triangular(Lx, np.atleast_2d(np.asarray(K_x_star, dtype=float).T).T,
                          lower=True, check_finite=False)
    nf = np.sum(Bf * Bf, axis=0)
    nx = np.sum(Bx * Bx, axis=0)
    if pairwise:
        if Bf.shape[1] != Bx.shape[1]:
            raise ShapeError("pairwise queries need as many scenario as location columns")
        mean = np.sum(Bf * (A @ Bx), axis=0)
        raw = prior_variance - nf * nx
    else:
        mean = Bf.T @ A @ Bx
        raw = prior_variance - np.outer(nf, nx)
    return mean, _clamp_variance(raw, prior_variance)
