# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels (same contract as _pykernels)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def _dtype_of(real[:, :, :, ::1] x):
    if real is float:
        return np.float32
    return np.float64


def im2col(real[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = w - kw + 1
    out_arr = np.empty((n, c * kh * kw, ho * wo), dtype=_dtype_of(x))
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, y, xx, row
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for y in range(ho):
                            for xx in range(wo):
                                out[b, row, y * wo + xx] = x[b, ch, y + i, xx + j]
    return out_arr


def col2im(real[:, :, ::1] cols, tuple shape, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = h - kh + 1, wo = w - kw + 1
    out_arr = np.zeros(shape, dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, y, xx, row
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ch * kh + i) * kw + j
                        for y in range(ho):
                            for xx in range(wo):
                                out[b, ch, y + i, xx + j] += cols[b, row, y * wo + xx]
    return out_arr


def maxpool_forward(real[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // kh, wo = x.shape[3] // kw
    out_arr = np.empty((n, c, ho, wo), dtype=_dtype_of(x))
    arg_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b, ch, y, xx, i, j, best_k
    cdef real best, v
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(ho):
                    for xx in range(wo):
                        best = x[b, ch, y * kh, xx * kw]
                        best_k = 0
                        for i in range(kh):
                            for j in range(kw):
                                v = x[b, ch, y * kh + i, xx * kw + j]
                                # strict '>' keeps the first index on ties
                                if v > best:
                                    best = v
                                    best_k = i * kw + j
                        out[b, ch, y, xx] = best
                        arg[b, ch, y, xx] = best_k
    return out_arr, arg_arr


def maxpool_backward(real[:, :, :, ::1] g, cnp.int64_t[:, :, :, ::1] arg,
                      tuple shape, Py_ssize_t kh, Py_ssize_t kw):
    out_arr = np.zeros(shape, dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t b, ch, y, xx, k
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(ho):
                    for xx in range(wo):
                        k = arg[b, ch, y, xx]
                        out[b, ch, y * kh + k // kw, xx * kw + k % kw] += g[b, ch, y, xx]
    return out_arr
