# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled spiral gather/scatter kernels (float64).

Semantics and accumulation order match kernels._fallback exactly.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def gather(const double[:, :, ::1] values, const cnp.intp_t[:, ::1] table, Py_ssize_t sentinel):
    cdef Py_ssize_t b = values.shape[0]
    cdef Py_ssize_t c = values.shape[2]
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t l = table.shape[1]
    out_arr = np.zeros((b, n, l * c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, v, j, k, src
    for i in range(b):
        for v in range(n):
            for j in range(l):
                src = table[v, j]
                if src == sentinel:
                    continue
                for k in range(c):
                    out[i, v, j * c + k] = values[i, src, k]
    return out_arr


def scatter_add(const double[:, :, ::1] grad, const cnp.intp_t[:, ::1] table, Py_ssize_t sentinel, Py_ssize_t rows):
    cdef Py_ssize_t b = grad.shape[0]
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t l = table.shape[1]
    cdef Py_ssize_t c = grad.shape[2] // l
    out_arr = np.zeros((b, rows, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, v, j, k, dst
    for i in range(b):
        for v in range(n):
            for j in range(l):
                dst = table[v, j]
                if dst == sentinel:
                    continue
                for k in range(c):
                    out[i, dst, k] += grad[i, v, j * c + k]
    return out_arr
