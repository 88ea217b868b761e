"""Independent reference computations used by the tests.

Nothing here imports the package's kernel or linear-algebra code: kernels
use the general Matern form with modified Bessel functions, densities come
from scipy.stats, and conditionals are plain dense solves.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special, stats
from scipy.spatial.distance import cdist

NU = {"exp": 0.5, "matern32": 1.5, "matern52": 2.5}


def kernel_value(kind: str, r, variance=1.0):
    """Stationary kernel at normalized distance ``r`` (vectorized)."""
    r = np.asarray(r, dtype=float)
    if kind == "se":
        return variance * np.exp(-0.5 * r * r)
    nu = NU[kind]
    z = np.sqrt(2 * nu) * r
    with np.errstate(invalid="ignore"):
        val = (2 ** (1 - nu) / special.gamma(nu)) * z ** nu * special.kv(nu, z)
    return variance * np.where(r == 0, 1.0, val)


def scaled_cdist(a, b, lengthscales):
    ell = np.asarray(lengthscales, dtype=float)
    return cdist(np.atleast_2d(a) / ell, np.atleast_2d(b) / ell)


def functional_gram(kind, coef_a, coef_b, column_lengthscales):
    """Correlation between coefficient rows, one length-scale per column."""
    if coef_a.shape[1] == 0:
        return np.ones((coef_a.shape[0], coef_b.shape[0]))
    return kernel_value(kind, scaled_cdist(coef_a, coef_b, column_lengthscales))


def spatial_gram(kind, xa, xb, lengthscales, variance):
    return kernel_value(kind, scaled_cdist(xa, xb, lengthscales), variance)


def column_lengthscales(p_vector, lengthscales):
    return np.repeat(np.asarray(lengthscales, dtype=float), p_vector)


def dense_covariance(hyp, projected, locations, scenario_index=None, noise=0.0):
    """Full N x N covariance. Scenario-major tensor order when scenario_index is None."""
    cols = column_lengthscales(projected.p_vector, hyp.functional_lengthscales)
    C = projected.stacked
    Kf = functional_gram(hyp.functional_kind.value, C, C, cols)
    if scenario_index is None:
        Kx = spatial_gram(hyp.spatial_kind.value, locations, locations,
                          hyp.spatial_lengthscales, hyp.spatial_variance)
        K = np.kron(Kf, Kx)
    else:
        Kx = spatial_gram(hyp.spatial_kind.value, locations, locations,
                          hyp.spatial_lengthscales, hyp.spatial_variance)
        K = Kf[np.ix_(scenario_index, scenario_index)] * Kx
    return K + noise * np.eye(K.shape[0])


def gaussian_loglik(y, K):
    return float(stats.multivariate_normal(mean=np.zeros(len(y)), cov=K, allow_singular=False).logpdf(y))


def conditional(K, k_star, k_ss, y):
    """Mean and variance of the Gaussian conditional by dense solves."""
    w = np.linalg.solve(K, k_star)
    return w.T @ y, k_ss - np.sum(k_star * w, axis=0)


def pca_eig(F):
    """Eigenvalues (descending) and eigenvectors of the replicate covariance via SVD."""
    Fc = F - F.mean(axis=0)
    _, s, vt = np.linalg.svd(Fc, full_matrices=True)
    lam = np.zeros(F.shape[1])
    lam[: s.size] = s ** 2 / F.shape[0]
    return lam, vt.T


def l2_distance_sq(f, g, a=0.0, b=1.0):
    val, _ = integrate.quad(lambda t: (f(t) - g(t)) ** 2, a, b, epsabs=1e-14, epsrel=1e-12)
    return val


def matern52_scalar(r):
    s5 = math.sqrt(5.0)
    return (1 + s5 * r + 5 * r * r / 3) * math.exp(-s5 * r)
