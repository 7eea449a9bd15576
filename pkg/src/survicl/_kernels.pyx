# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled loops for pairwise concordance and Breslow partial likelihood.

Inputs are pre-sorted by ascending time by the Python wrappers in
``survicl.kernels``; these functions do no validation.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()


def concordance_td(const double[:, ::1] curves, const cnp.intp_t[::1] col,
                   const double[::1] time, const cnp.int8_t[::1] event):
    cdef Py_ssize_t n = time.shape[0]
    cdef Py_ssize_t i, j, start = 0, c
    cdef double score = 0.0, si, sj
    cdef long long comparable = 0
    for i in range(n):
        if event[i] == 0:
            continue
        if start <= i:
            start = i + 1
        while start < n and time[start] <= time[i]:
            start += 1
        c = col[i]
        si = curves[i, c]
        for j in range(start, n):
            sj = curves[j, c]
            if si < sj:
                score += 1.0
            elif si == sj:
                score += 0.5
        comparable += n - start
    return score, comparable


def breslow_derivatives(const double[:, ::1] X, const double[::1] lp,
                        const double[::1] time, const cnp.int8_t[::1] event):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t i, k, l, g_start, g_end
    cdef double s0 = 0.0, w, d, loglik = 0.0, shift
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s1_arr = np.zeros(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s2_arr = np.zeros((p, p))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] grad_arr = np.zeros(p)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] hess_arr = np.zeros((p, p))
    cdef double[::1] s1 = s1_arr
    cdef double[:, ::1] s2 = s2_arr
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr

    shift = 0.0
    for i in range(n):
        if lp[i] > shift:
            shift = lp[i]

    g_end = n
    while g_end > 0:
        g_start = g_end - 1
        while g_start > 0 and time[g_start - 1] == time[g_end - 1]:
            g_start -= 1
        d = 0.0
        for i in range(g_start, g_end):
            w = exp(lp[i] - shift)
            s0 += w
            for k in range(p):
                s1[k] += w * X[i, k]
                for l in range(k + 1):
                    s2[k, l] += w * X[i, k] * X[i, l]
            if event[i]:
                d += 1.0
                loglik += lp[i]
                for k in range(p):
                    grad[k] += X[i, k]
        if d > 0:
            loglik -= d * (log(s0) + shift)
            for k in range(p):
                grad[k] -= d * s1[k] / s0
                for l in range(k + 1):
                    hess[k, l] -= d * (s2[k, l] / s0 - s1[k] * s1[l] / (s0 * s0))
        g_end = g_start

    for k in range(p):
        for l in range(k):
            hess[l, k] = hess[k, l]
    return loglik, grad_arr, hess_arr
