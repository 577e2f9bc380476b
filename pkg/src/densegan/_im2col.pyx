# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col/col2im for float64 NCHW tensors.

Column layout is ``(N, C*k*k, OH*OW)`` with row index ``c*k*k + i*k + j``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c * k * k, oh * ow), dtype=np.float64)
    cdef double[:, :, ::1] cols = out
    cdef Py_ssize_t b, ch, i, j, y, xx, row, iy, ix
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for y in range(oh):
                            iy = y * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for xx in range(ow):
                                ix = xx * stride + j - pad
                                if ix < 0 or ix >= w:
                                    continue
                                cols[b, row, y * ow + xx] = x[b, ch, iy, ix]
    return out


def col2im(const double[:, :, ::1] cols, int c, int h, int w, int k, int stride, int pad):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t oh = (h + 2 * pad - k) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - k) // stride + 1
    if cols.shape[1] != c * k * k or cols.shape[2] != oh * ow:
        raise ValueError("column buffer does not match image geometry")
    out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] img = out
    cdef Py_ssize_t b, ch, i, j, y, xx, row, iy, ix
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for y in range(oh):
                            iy = y * stride + i - pad
                            if iy < 0 or iy >= h:
                                continue
                            for xx in range(ow):
                                ix = xx * stride + j - pad
                                if ix < 0 or ix >= w:
                                    continue
                                img[b, ch, iy, ix] += cols[b, row, y * ow + xx]
    return out
