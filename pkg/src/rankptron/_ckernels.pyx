# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-round kernels. Mirrors ``_pykernels`` function by function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log2, pow, NAN

cnp.import_array()


def slam_terms(const double[::1] s, const cnp.int64_t[::1] grades, double margin):
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t i, j, kbest
    cdef double best, b
    c_arr = np.zeros(m, dtype=np.float64)
    k_arr = np.full(m, -1, dtype=np.int64)
    cdef double[::1] c = c_arr
    cdef cnp.int64_t[::1] k = k_arr
    for i in range(m):
        best = 0.0
        kbest = -1
        for j in range(m):
            if grades[i] > grades[j]:
                b = (margin + s[j]) - s[i]
                if b > best:
                    best = b
                    kbest = j
        if kbest >= 0:
            c[i] = best
            k[i] = kbest
    return c_arr, k_arr


def slam_loss_direction(const double[::1] s, const cnp.int64_t[::1] grades,
                        const double[::1] v, double margin):
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t i, j, kbest
    cdef double best, b, loss = 0.0
    u_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] u = u_arr
    for i in range(m):
        best = 0.0
        kbest = -1
        for j in range(m):
            if grades[i] > grades[j]:
                b = (margin + s[j]) - s[i]
                if b > best:
                    best = b
                    kbest = j
        if kbest >= 0:
            loss += v[i] * best
            u[kbest] += v[i]
            u[i] -= v[i]
    return loss, u_arr


def pairwise_witness(const double[::1] s, const cnp.int64_t[::1] grades):
    cdef Py_ssize_t m = s.shape[0]
    cdef Py_ssize_t i, j, ibest = -1, jbest = -1
    cdef double best = 0.0, b
    for i in range(m):
        for j in range(m):
            if grades[i] > grades[j]:
                b = (1.0 + s[j]) - s[i]
                if b > best:
                    best = b
                    ibest = i
                    jbest = j
    if ibest < 0:
        return 0.0, -1, -1
    return best, ibest, jbest


def dcg_ranked(const cnp.int64_t[::1] ranked_grades, Py_ssize_t k):
    cdef Py_ssize_t i, n = min(k, ranked_grades.shape[0])
    cdef double total = 0.0
    for i in range(n):
        total += (pow(2.0, <double>ranked_grades[i]) - 1.0) / log2(i + 2.0)
    return total


def ap_ranked(const cnp.int64_t[::1] ranked_binary):
    cdef Py_ssize_t j, n = ranked_binary.shape[0]
    cdef long hits = 0
    cdef double total = 0.0
    for j in range(n):
        if ranked_binary[j] != 0:
            hits += 1
            total += <double>hits / (j + 1.0)
    if hits == 0:
        return NAN
    return total / hits
