# cython: language_level=3
"""Compiled trapezoidal stepping kernel.

This is the hot loop of fixed-step time integration: the parameter fitter
simulates small systems thousands of times, so the per-step interpreter
overhead of the pure-python loop dominates there. Semantics are identical to
``_stepkernel_py.trapezoidal_loop``.
"""

import numpy as np


def trapezoidal_loop(double[:, ::1] Ad, double[:, ::1] Bd2, double[:, ::1] C,
                     double[:, ::1] u, double[::1] x0):
    cdef Py_ssize_t N = u.shape[0]
    cdef Py_ssize_t n = Ad.shape[0]
    cdef Py_ssize_t m = u.shape[1]
    cdef Py_ssize_t p = C.shape[0]
    Y_arr = np.empty((N, p))
    x_arr = np.ascontiguousarray(x0, dtype=np.float64).copy()
    xn_arr = np.empty(n)
    cdef double[:, ::1] Y = Y_arr
    cdef double[::1] x = x_arr
    cdef double[::1] xn = xn_arr
    cdef Py_ssize_t k, i, j, q
    cdef double acc
    for k in range(N):
        for i in range(p):
            acc = 0.0
            for j in range(n):
                acc += C[i, j] * x[j]
            Y[k, i] = acc
        if k + 1 < N:
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += Ad[i, j] * x[j]
                for q in range(m):
                    acc += Bd2[i, q] * (u[k, q] + u[k + 1, q])
                xn[i] = acc
            for i in range(n):
                x[i] = xn[i]
    return Y_arr
