# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: edge energy and the O(n^2) variance reduction.

Long reductions are blocked: BLAS ``ddot`` within a block of ``BLOCK``
terms, Neumaier compensation across blocks.  All terms of the variance sum
are nonnegative, so the in-block error is bounded by ``BLOCK * eps``
relative.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport ddot

cnp.import_array()

DEF BLOCK = 256


cdef inline void _nadd(double *s, double *comp, double x) noexcept nogil:
    cdef double t = s[0] + x
    if abs(s[0]) >= abs(x):
        comp[0] += (s[0] - t) + x
    else:
        comp[0] += (x - t) + s[0]
    s[0] = t


cdef inline double _row_dot(const double *a, const double *w, Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0, comp = 0.0
    cdef int one = 1, len_
    cdef Py_ssize_t start = 0, stop
    while start < n:
        stop = start + BLOCK
        if stop > n:
            stop = n
        len_ = <int>(stop - start)
        _nadd(&s, &comp, ddot(&len_, <double *>(a + start), &one, <double *>(w + start), &one))
        start = stop
    return s + comp


def energy(const double[::1] u, const cnp.int64_t[::1] ei,
           const cnp.int64_t[::1] ej, const double[::1] cond):
    cdef Py_ssize_t k, m = ei.shape[0]
    cdef double s = 0.0, comp = 0.0, d
    with nogil:
        for k in range(m):
            d = u[ei[k]] - u[ej[k]]
            _nadd(&s, &comp, cond[k] * d * d)
    return s + comp


def energy_gradient(const double[::1] u, const cnp.int64_t[::1] ei,
                    const cnp.int64_t[::1] ej, const double[::1] cond):
    cdef Py_ssize_t k, m = ei.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(u.shape[0])
    cdef double[::1] g = out
    cdef double t
    with nogil:
        for k in range(m):
            t = 2.0 * cond[k] * (u[ei[k]] - u[ej[k]])
            g[ei[k]] += t
            g[ej[k]] -= t
    return out


def variance_rowsums(const double[:, ::1] dpow, const double[::1] w):
    """Return ``(sum_xy dpow[x,y] w[x] w[y], dpow @ w)``."""
    cdef Py_ssize_t n = w.shape[0], i
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef double[::1] rows = out
    cdef double tot = 0.0, tcomp = 0.0
    with nogil:
        for i in range(n):
            rows[i] = _row_dot(&dpow[i, 0], &w[0], n)
            _nadd(&tot, &tcomp, w[i] * rows[i])
    return tot + tcomp, out


def objective_parts(const double[:, ::1] dpow, const double[::1] u, const double[::1] mu,
                    const cnp.int64_t[::1] ei, const cnp.int64_t[::1] ej,
                    const double[::1] cond):
    """Variance, energy and both gradients in one pass.

    Returns ``(var, energy, grad_var, grad_energy)``.
    """
    cdef Py_ssize_t n = u.shape[0], i, k, m = ei.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gv_arr = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ge_arr = np.zeros(n)
    cdef double[::1] w = w_arr
    cdef double[::1] gv = gv_arr
    cdef double[::1] ge = ge_arr
    cdef double row, tot = 0.0, tcomp = 0.0, es = 0.0, ecomp = 0.0, d, t
    with nogil:
        for i in range(n):
            w[i] = u[i] * u[i] * mu[i]
        for i in range(n):
            if w[i] == 0.0:
                gv[i] = 0.0
                continue
            row = _row_dot(&dpow[i, 0], &w[0], n)
            gv[i] = 4.0 * mu[i] * u[i] * row
            _nadd(&tot, &tcomp, w[i] * row)
        for k in range(m):
            d = u[ei[k]] - u[ej[k]]
            _nadd(&es, &ecomp, cond[k] * d * d)
            t = 2.0 * cond[k] * d
            ge[ei[k]] += t
            ge[ej[k]] -= t
    return tot + tcomp, es + ecomp, gv_arr, ge_arr
