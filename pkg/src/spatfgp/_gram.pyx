# cython: language_level=3
"""Compiled Gram kernels: fused scaled distance and stationary profile."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double SQRT3 = sqrt(3.0)
cdef double SQRT5 = sqrt(5.0)
cdef double ZERO_DISTANCE = 1e-15


cdef inline double _profile(int kind, double r) noexcept nogil:
    cdef double s
    if r < ZERO_DISTANCE:
        r = 0.0
    if kind == 0:
        return exp(-0.5 * r * r)
    elif kind == 1:
        s = SQRT5 * r
        return (1.0 + s + s * s / 3.0) * exp(-s)
    elif kind == 2:
        s = SQRT3 * r
        return (1.0 + s) * exp(-s)
    else:
        return exp(-r)


def scaled_sqdist(x1, x2, inv_scales):
    cdef const double[:, ::1] a = np.ascontiguousarray(x1, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(x2, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(inv_scales, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    diff = (a[i, k] - b[j, k]) * w[k]
                    acc = acc + diff * diff
                o[i, j] = acc
    return out


def gram(x1, x2, inv_scales, int kind, double variance):
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown kernel code {kind}")
    cdef const double[:, ::1] a = np.ascontiguousarray(x1, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(x2, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(inv_scales, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(d):
                    diff = (a[i, k] - b[j, k]) * w[k]
                    acc = acc + diff * diff
                o[i, j] = variance * _profile(kind, sqrt(acc))
    return out
