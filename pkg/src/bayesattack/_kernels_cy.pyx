# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the Matern-5/2 kernel and the direct 2-D DFT.

Signatures mirror :mod:`bayesattack._kernels_py`; inputs must be C-contiguous
float64 arrays.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, cos, sin, M_PI

cnp.import_array()

cdef double SQRT5 = 2.23606797749978969640


def matern52_cov(const double[:, ::1] X1, const double[:, ::1] X2,
                 const double[::1] lengthscales, double signal_variance):
    cdef Py_ssize_t n1 = X1.shape[0], n2 = X2.shape[0], d = X1.shape[1]
    cdef Py_ssize_t a, b, i
    cdef double r2, diff, s5r
    out = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] K = out
    inv = np.empty(d, dtype=np.float64)
    cdef double[::1] inv2 = inv
    for i in range(d):
        inv2[i] = 1.0 / (lengthscales[i] * lengthscales[i])
    for a in range(n1):
        for b in range(n2):
            r2 = 0.0
            for i in range(d):
                diff = X1[a, i] - X2[b, i]
                r2 += diff * diff * inv2[i]
            s5r = SQRT5 * sqrt(r2)
            K[a, b] = signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * exp(-s5r)
    return out


def matern52_cross_grad(const double[::1] x, const double[:, ::1] X,
                        const double[::1] lengthscales, double signal_variance):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t a, i
    cdef double r2, diff, s5r, e, g
    k_out = np.empty(n, dtype=np.float64)
    dk_out = np.empty((n, d), dtype=np.float64)
    cdef double[::1] k = k_out
    cdef double[:, ::1] dk = dk_out
    inv = np.empty(d, dtype=np.float64)
    cdef double[::1] inv2 = inv
    for i in range(d):
        inv2[i] = 1.0 / (lengthscales[i] * lengthscales[i])
    for a in range(n):
        r2 = 0.0
        for i in range(d):
            diff = x[i] - X[a, i]
            r2 += diff * diff * inv2[i]
        s5r = SQRT5 * sqrt(r2)
        e = exp(-s5r)
        k[a] = signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * e
        g = -(5.0 / 3.0) * signal_variance * (1.0 + s5r) * e
        for i in range(d):
            dk[a, i] = g * (x[i] - X[a, i]) * inv2[i]
    return k_out, dk_out


def matern52_lengthscale_grad(const double[:, ::1] X, const double[::1] lengthscales,
                              double signal_variance, const double[:, ::1] W):
    """Return sum_ab W_ab dK_ab/dlog(lengthscale_i) for symmetric W."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t a, b, i
    cdef double r2, diff, s5r, g
    out = np.zeros(d, dtype=np.float64)
    cdef double[::1] acc = out
    inv = np.empty(d, dtype=np.float64)
    cdef double[::1] inv2 = inv
    for i in range(d):
        inv2[i] = 1.0 / (lengthscales[i] * lengthscales[i])
    for a in range(n):
        for b in range(a + 1, n):
            r2 = 0.0
            for i in range(d):
                diff = X[a, i] - X[b, i]
                r2 += diff * diff * inv2[i]
            s5r = SQRT5 * sqrt(r2)
            # factor 2 for the (b, a) twin
            g = 2.0 * W[a, b] * (5.0 / 3.0) * signal_variance * (1.0 + s5r) * exp(-s5r)
            for i in range(d):
                diff = X[a, i] - X[b, i]
                acc[i] += g * diff * diff * inv2[i]
    return out


cdef void _dft_rows(double[:, ::1] re, double[:, ::1] im,
                    double[:, ::1] ore, double[:, ::1] oim,
                    const double[::1] ctab, const double[::1] stab,
                    double sign, double scale) noexcept nogil:
    cdef Py_ssize_t d = re.shape[0]
    cdef Py_ssize_t r, u, j, m
    cdef double sr, si, c, s
    for r in range(d):
        for u in range(d):
            sr = 0.0
            si = 0.0
            m = 0
            for j in range(d):
                c = ctab[m]
                s = sign * stab[m]
                sr += re[r, j] * c - im[r, j] * s
                si += re[r, j] * s + im[r, j] * c
                m += u
                if m >= d:
                    m -= d
            ore[r, u] = sr * scale
            oim[r, u] = si * scale


def dft2(real, imag, bint inverse=False):
    """Row-column direct DFT with 1/d total normalization."""
    cdef Py_ssize_t d = real.shape[0]
    cdef Py_ssize_t m
    re_in = np.ascontiguousarray(real, dtype=np.float64)
    im_in = np.ascontiguousarray(imag, dtype=np.float64)
    ctab_a = np.empty(d, dtype=np.float64)
    stab_a = np.empty(d, dtype=np.float64)
    cdef double[::1] ctab = ctab_a
    cdef double[::1] stab = stab_a
    for m in range(d):
        ctab[m] = cos(2.0 * M_PI * m / d)
        stab[m] = sin(2.0 * M_PI * m / d)
    cdef double sign = 1.0 if inverse else -1.0
    cdef double scale = 1.0 / sqrt(<double>d)
    tre = np.empty((d, d), dtype=np.float64)
    tim = np.empty((d, d), dtype=np.float64)
    _dft_rows(re_in, im_in, tre, tim, ctab, stab, sign, scale)
    # transpose, transform rows again, transpose back
    tre_t = np.ascontiguousarray(tre.T)
    tim_t = np.ascontiguousarray(tim.T)
    ore = np.empty((d, d), dtype=np.float64)
    oim = np.empty((d, d), dtype=np.float64)
    _dft_rows(tre_t, tim_t, ore, oim, ctab, stab, sign, scale)
    return np.ascontiguousarray(ore.T), np.ascontiguousarray(oim.T)
