# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled weight-row kernels; `_core_np` documents the shared contract."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

OP_EVAL = 0
OP_LAPLACIAN = 1
OP_DIRECTIONAL = 2


cdef inline double ipow(double x, cnp.int64_t e) noexcept nogil:
    cdef double acc = 1.0
    cdef cnp.int64_t i
    for i in range(e):
        acc *= x
    return acc


def operator_rows(double[:, ::1] points, cnp.int64_t[::1] stencil_ids,
                  double[:, :, ::1] node_coords, double[:, :, ::1] kmats,
                  double[:, ::1] shifts, double[::1] scales,
                  cnp.int64_t[:, ::1] exponents, int op_code,
                  double[:, ::1] directions, double[:, ::1] out):
    cdef Py_ssize_t total = points.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef Py_ssize_t n = node_coords.shape[1]
    cdef Py_ssize_t m = exponents.shape[0]
    cdef Py_ssize_t nm = n + m
    cdef Py_ssize_t i, j, k, a, b, s
    cdef cnp.int64_t e
    cdef double r2, r, dot, scale, part, term, v
    cdef double diff[3]
    cdef double xi[3]
    cdef double[::1] brow = np.empty(nm)

    with nogil:
        for i in range(total):
            s = stencil_ids[i]
            scale = scales[s]

            for j in range(n):
                r2 = 0.0
                for a in range(dim):
                    diff[a] = points[i, a] - node_coords[s, j, a]
                    r2 += diff[a] * diff[a]
                r = sqrt(r2)
                if op_code == 0:
                    brow[j] = r * r * r
                elif op_code == 1:
                    brow[j] = 3.0 * (dim + 1) * r
                else:
                    dot = 0.0
                    for a in range(dim):
                        dot += diff[a] * directions[i, a]
                    brow[j] = 3.0 * r * dot

            for a in range(dim):
                xi[a] = (points[i, a] - shifts[s, a]) / scale
            for k in range(m):
                if op_code == 0:
                    term = 1.0
                    for a in range(dim):
                        term *= ipow(xi[a], exponents[k, a])
                    brow[n + k] = term
                elif op_code == 1:
                    term = 0.0
                    for a in range(dim):
                        e = exponents[k, a]
                        if e >= 2:
                            part = e * (e - 1) * ipow(xi[a], e - 2)
                            for b in range(dim):
                                if b != a:
                                    part *= ipow(xi[b], exponents[k, b])
                            term += part
                    brow[n + k] = term / (scale * scale)
                else:
                    term = 0.0
                    for a in range(dim):
                        e = exponents[k, a]
                        if e >= 1:
                            part = e * ipow(xi[a], e - 1) * directions[i, a]
                            for b in range(dim):
                                if b != a:
                                    part *= ipow(xi[b], exponents[k, b])
                            term += part
                    brow[n + k] = term / scale

            for j in range(n):
                out[i, j] = 0.0
            for k in range(nm):
                v = brow[k]
                if v != 0.0:
                    for j in range(n):
                        out[i, j] += v * kmats[s, k, j]
    return np.asarray(out)
