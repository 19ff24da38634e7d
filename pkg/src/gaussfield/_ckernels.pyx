# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in :mod:`gaussfield._kernels_py`."""
from libc.math cimport floor, sin, cos
import numpy as np
cimport numpy as cnp


def cheb_eval(const double[:, ::1] coef, double length, const double[::1] x, double[::1] out):
    cdef Py_ssize_t n = x.shape[0], nint = coef.shape[0], deg1 = coef.shape[1]
    cdef Py_ssize_t i, k, idx
    cdef double t, t2, b1, b2, tmp
    for i in range(n):
        idx = <Py_ssize_t>floor(x[i] / length)
        if idx >= nint or idx < 0:
            out[i] = 0.0
            continue
        t = 2.0 * (x[i] - idx * length) / length - 1.0
        t2 = 2.0 * t
        b1 = 0.0
        b2 = 0.0
        for k in range(deg1 - 1, 0, -1):
            tmp = coef[idx, k] + t2 * b1 - b2
            b2 = b1
            b1 = tmp
        out[i] = coef[idx, 0] + t * b1 - b2
    return np.asarray(out)


def trig_sum(const double[::1] kappa, const double[::1] u, const double[::1] g, bint odd, double[::1] out):
    cdef Py_ssize_t n = kappa.shape[0], m = u.shape[0], i, t
    cdef double acc, kap
    for i in range(n):
        kap = kappa[i]
        acc = 0.0
        if odd:
            for t in range(m):
                acc += g[t] * sin(kap * u[t])
        else:
            for t in range(m):
                acc += g[t] * cos(kap * u[t])
        out[i] = acc
    return np.asarray(out)


def weighted_vdot(const double[::1] w, const double complex[::1] a, const double complex[::1] b):
    cdef Py_ssize_t n = w.shape[0], i
    cdef double re = 0.0, im = 0.0
    cdef double ar, ai, br, bi
    for i in range(n):
        ar = a[i].real
        ai = a[i].imag
        br = b[i].real
        bi = b[i].imag
        re += w[i] * (ar * br + ai * bi)
        im += w[i] * (ar * bi - ai * br)
    return complex(re, im)
