# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled COO sparse-dense product kernels.

Both kernels accumulate into ``out`` and release the GIL, so shard workers
can run them concurrently. Index arrays are int64, values float64, dense
operands C-contiguous float64.
"""
from libc.stdint cimport int64_t


def left_matmul(const int64_t[::1] rows, const int64_t[::1] cols,
                const double[::1] vals, const double[:, ::1] x,
                double[:, ::1] out):
    """out += x @ A, with A given by (rows, cols, vals)."""
    cdef Py_ssize_t nb = x.shape[0]
    cdef Py_ssize_t nnz = vals.shape[0]
    cdef Py_ssize_t i, e
    with nogil:
        for i in range(nb):
            for e in range(nnz):
                out[i, cols[e]] += x[i, rows[e]] * vals[e]


def right_matmul(const int64_t[::1] rows, const int64_t[::1] cols,
                 const double[::1] vals, const double[:, ::1] x,
                 double[:, ::1] out):
    """out += A @ x, with A given by (rows, cols, vals)."""
    cdef Py_ssize_t k = x.shape[1]
    cdef Py_ssize_t nnz = vals.shape[0]
    cdef Py_ssize_t e, j, r, c
    cdef double v
    with nogil:
        for e in range(nnz):
            r = rows[e]
            c = cols[e]
            v = vals[e]
            for j in range(k):
                out[r, j] += v * x[c, j]
