"""Pure numpy implementation of the Gram kernels (fallback for ``_gram``)."""

import numpy as np

SQRT3 = np.sqrt(3.0)
SQRT5 = np.sqrt(5.0)
# distances below this are treated as exactly zero
ZERO_DISTANCE = 1e-15

KIND_CODES = {"se": 0, "matern52": 1, "matern32": 2, "exp": 3}


def stationary(kind, r, variance=1.0):
    """Evaluate a stationary profile on an array of scaled distances ``r``."""
    r = np.where(r < ZERO_DISTANCE, 0.0, r)
    if kind == 0:
        out = np.exp(-0.5 * r * r)
    elif kind == 1:
        s = SQRT5 * r
        out = (1.0 + s + s * s / 3.0) * np.exp(-s)
    elif kind == 2:
        s = SQRT3 * r
        out = (1.0 + s) * np.exp(-s)
    elif kind == 3:
        out = np.exp(-r)
    else:
        raise ValueError(f"unknown kernel code {kind}")
    return variance * out


def scaled_sqdist(x1, x2, inv_scales):
    x1 = np.ascontiguousarray(x1, dtype=float)
    x2 = np.ascontiguousarray(x2, dtype=float)
    d2 = np.zeros((x1.shape[0], x2.shape[0]))
    for k in range(x1.shape[1]):
        diff = (x1[:, k, None] - x2[None, :, k]) * inv_scales[k]
        d2 += diff * diff
    return d2


def gram(x1, x2, inv_scales, kind, variance):
    d2 = scaled_sqdist(x1, x2, np.asarray(inv_scales, dtype=float))
    return stationary(kind, np.sqrt(d2), variance)
