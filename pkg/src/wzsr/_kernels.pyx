# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled lane of the elementwise hot kernels.

Every function mirrors kernels_py.py operation-for-operation: identical
floating-point expressions evaluated in the same order, compiled with
-ffp-contract=off so no FMA contraction can alter results.  The two lanes
are bit-identical; only speed differs (fused single passes, no temporary
arrays).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "ext"


def leaky_fwd(cnp.ndarray[cnp.float64_t, ndim=2] x, double slope):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty_like(x)
    cdef double v
    for i in range(n):
        for j in range(m):
            v = x[i, j]
            out[i, j] = v if v > 0.0 else slope * v
    return out


def leaky_bwd(cnp.ndarray[cnp.float64_t, ndim=2] g, cnp.ndarray[cnp.float64_t, ndim=2] ref,
              double slope):
    cdef Py_ssize_t n = ref.shape[0], m = ref.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty_like(ref)
    for i in range(n):
        for j in range(m):
            out[i, j] = g[i, j] if ref[i, j] > 0.0 else slope * g[i, j]
    return out


def cell_fwd(cnp.ndarray[cnp.float64_t, ndim=2] xw, hw_obj,
             cnp.ndarray[cnp.float64_t, ndim=2] b, double slope):
    cdef Py_ssize_t n = xw.shape[0], m = xw.shape[1], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h = np.empty_like(xw)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] hw
    cdef double v
    if hw_obj is None:
        for i in range(n):
            for j in range(m):
                v = xw[i, j] + b[0, j]
                h[i, j] = v if v > 0.0 else slope * v
    else:
        hw = hw_obj
        for i in range(n):
            for j in range(m):
                v = (xw[i, j] + hw[i, j]) + b[0, j]
                h[i, j] = v if v > 0.0 else slope * v
    return h


def adam_step(cnp.ndarray[cnp.float64_t, ndim=2] p, cnp.ndarray[cnp.float64_t, ndim=2] g,
              cnp.ndarray[cnp.float64_t, ndim=2] m, cnp.ndarray[cnp.float64_t, ndim=2] v,
              double c1, double c2, double lr, double b1, double b2, double eps):
    cdef Py_ssize_t n = p.shape[0], cols = p.shape[1], i, j
    cdef double gi, mi, vi, den, upd
    for i in range(n):
        for j in range(cols):
            gi = g[i, j]
            mi = b1 * m[i, j] + (1.0 - b1) * gi
            vi = b2 * v[i, j] + (1.0 - b2) * (gi * gi)
            m[i, j] = mi
            v[i, j] = vi
            den = sqrt(vi / c2)
            den = den + eps
            upd = lr * (mi / c1)
            upd = upd / den
            p[i, j] = p[i, j] - upd
