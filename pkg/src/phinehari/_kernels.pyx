# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fibering-map reductions for the closed-form N-function families.

For a direction with per-cell gradient magnitudes ``g`` and each scale ``t``,
``fiber_sums_*`` accumulate (with ``s = t g``)

    SA = sum Phi(s),  SB = sum s^2 phi(s),  SC = sum s^3 phi'(s)

Every ``t`` is reduced sequentially by one thread, so results do not depend
on the thread count.
"""
from cython.parallel import prange
from libc.math cimport exp, log, log1p, pow

import numpy as np


def fiber_sums_sumpower(const double[::1] logg, const double[::1] ts,
                        const double[::1] coef, const double[::1] pw,
                        int num_threads=1):
    # logg holds log(g) with zero magnitudes mapped to -1e300 (exp -> 0).
    cdef Py_ssize_t nt = ts.shape[0], nc = logg.shape[0], nj = pw.shape[0]
    cdef Py_ssize_t k, c, j
    cdef double lt, acc, p
    out = np.zeros((nt, 3))
    cdef double[:, ::1] o = out
    for k in prange(nt, nogil=True, num_threads=num_threads, schedule="static"):
        lt = log(ts[k])
        for j in range(nj):
            p = pw[j]
            acc = _power_sum(&logg[0], nc, p, p * lt)
            o[k, 0] += coef[j] / p * acc
            o[k, 1] += coef[j] * acc
            o[k, 2] += coef[j] * (p - 2.0) * acc
    return out


cdef inline double _power_sum(const double* logg, Py_ssize_t nc, double p,
                              double shift) noexcept nogil:
    cdef Py_ssize_t c
    cdef double acc = 0.0
    for c in range(nc):
        acc += exp(p * logg[c] + shift)
    return acc


def fiber_sums_plog(const double[::1] g, const double[::1] ts, double p,
                    int num_threads=1):
    cdef Py_ssize_t nt = ts.shape[0], nc = g.shape[0]
    cdef Py_ssize_t k, c
    cdef double t, s, sp, L, r, a, b, cc
    out = np.zeros((nt, 3))
    cdef double[:, ::1] o = out
    for k in prange(nt, nogil=True, num_threads=num_threads, schedule="static"):
        t = ts[k]
        a = 0.0
        b = 0.0
        cc = 0.0
        for c in range(nc):
            s = t * g[c]
            sp = pow(s, p)
            L = log1p(s)
            r = s / (1.0 + s)
            a = a + sp * L
            b = b + p * sp * L + sp * r
            cc = cc + p * (p - 2.0) * sp * L + (2.0 * p - 1.0) * sp * r - sp * r * r
        o[k, 0] = a
        o[k, 1] = b
        o[k, 2] = cc
    return out


def densities_sumpower(const double[::1] s, const double[::1] coef,
                       const double[::1] pw):
    cdef Py_ssize_t n = s.shape[0], nj = pw.shape[0], c, j
    cdef double sp
    out = np.zeros((4, n))
    cdef double[:, ::1] o = out
    with nogil:
        for c in range(n):
            if s[c] <= 0.0:
                continue
            for j in range(nj):
                sp = pow(s[c], pw[j])
                o[0, c] += coef[j] / pw[j] * sp
                o[1, c] += coef[j] * sp
                o[2, c] += coef[j] * (pw[j] - 2.0) * sp
                o[3, c] += coef[j] * sp / s[c]
    return out


def densities_plog(const double[::1] s, double p):
    cdef Py_ssize_t n = s.shape[0], c
    cdef double sp, L, r
    out = np.zeros((4, n))
    cdef double[:, ::1] o = out
    with nogil:
        for c in range(n):
            if s[c] <= 0.0:
                continue
            sp = pow(s[c], p)
            L = log1p(s[c])
            r = s[c] / (1.0 + s[c])
            o[0, c] = sp * L
            o[1, c] = p * sp * L + sp * r
            o[2, c] = p * (p - 2.0) * sp * L + (2.0 * p - 1.0) * sp * r - sp * r * r
            o[3, c] = o[1, c] / s[c]
    return out
