# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled red-black projected SOR sweeps.

Same contract and the same floating-point operation order as the numpy
reference in _sweeps_np; compiled with contraction disabled so modes 0 and 1
agree bitwise with the reference.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

BACKEND = "cython"

cdef double _TINY = 2.2250738585072014e-308
cdef int _BISECT_ITERS = 64


cdef inline double _beta(double r, double eps) nogil:
    cdef double d = r - eps
    if d > -_TINY:
        d = -_TINY
    return -exp(eps / d)


cdef inline double _bottom_target(
    double[:, ::1] u, double[:, ::1] cE, double[:, ::1] cW,
    double[:, ::1] cN, double[:, ::1] diag, double[:, ::1] rhs,
    double[::1] psi, double[::1] pen, double eps, int mode, Py_ssize_t i,
) nogil:
    cdef double acc = (
        rhs[i, 0] + cE[i, 0] * u[i + 1, 0] + cW[i, 0] * u[i - 1, 0]
        + cN[i, 0] * u[i, 1]
    )
    cdef double d0 = diag[i, 0]
    cdef double target = acc / d0
    cdef double lo, hi, mid, g
    cdef int it
    if mode == 2:
        lo = target
        hi = psi[i] + eps
        if target > hi:
            hi = target
        for it in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            g = d0 * mid - acc + pen[i] * _beta(mid - psi[i], eps)
            if g <= 0.0:
                lo = mid
            else:
                hi = mid
        target = 0.5 * (lo + hi)
    return target


def psor_sweep(
    double[:, ::1] u, double[:, ::1] cE, double[:, ::1] cW,
    double[:, ::1] cN, double[:, ::1] cS, double[:, ::1] diag,
    double[:, ::1] rhs, double[::1] psi, double[::1] pen,
    double eps, double omega, int mode,
):
    """One red-black SOR sweep, in place; returns the largest update."""
    cdef Py_ssize_t nx1 = u.shape[0]
    cdef Py_ssize_t ny1 = u.shape[1]
    cdef Py_ssize_t i, j
    cdef int color
    cdef double acc, unew, d, change = 0.0
    with nogil:
        for color in range(2):
            for i in range(1, nx1 - 1):
                for j in range(1, ny1 - 1):
                    if (i + j) % 2 != color:
                        continue
                    acc = (
                        rhs[i, j] + cE[i, j] * u[i + 1, j]
                        + cW[i, j] * u[i - 1, j] + cN[i, j] * u[i, j + 1]
                        + cS[i, j] * u[i, j - 1]
                    )
                    unew = (1.0 - omega) * u[i, j] + omega * acc / diag[i, j]
                    d = fabs(unew - u[i, j])
                    if d > change:
                        change = d
                    u[i, j] = unew
            for i in range(1, nx1 - 1):
                if i % 2 != color:
                    continue
                unew = (1.0 - omega) * u[i, 0] + omega * _bottom_target(
                    u, cE, cW, cN, diag, rhs, psi, pen, eps, mode, i
                )
                if mode == 1:
                    if unew < psi[i]:
                        unew = psi[i]
                d = fabs(unew - u[i, 0])
                if d > change:
                    change = d
                u[i, 0] = unew
    return change
