"""Pure numpy im2col/col2im, used when the compiled extension is unavailable.

Same layout as the compiled kernels: ``(N, C*k*k, OH*OW)``, row ``c*k*k + i*k + j``.
"""
import numpy as np


def im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((n, c, k, k, oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(n, c * k * k, oh * ow)


def col2im(cols, c, h, w, k, stride, pad):
    n = cols.shape[0]
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if cols.shape[1:] != (c * k * k, oh * ow):
        raise ValueError("column buffer does not match image geometry")
    cols = cols.reshape(n, c, k, k, oh, ow)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            img[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return img[:, :, pad:pad + h, pad:pad + w].copy()
