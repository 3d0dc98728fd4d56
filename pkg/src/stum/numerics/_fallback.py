"""Pure NumPy patch-extraction kernels (used when the compiled core is absent)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def im2col(x, k, stride, pad):
    n, c, h, w = x.shape
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (n, c, ho, wo, ky, kx) -> (n, ho, wo, c, ky, kx)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)


def col2im(cols, n, c, h, w, k, stride, pad):
    ho, wo = _out_size(h, k, stride, pad), _out_size(w, k, stride, pad)
    if cols.shape != (n * ho * wo, c * k * k):
        raise ValueError("column matrix shape does not match image geometry")
    patches = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ky in range(k):
        y_end = ky + stride * (ho - 1) + 1
        for kx in range(k):
            x_end = kx + stride * (wo - 1) + 1
            out[:, :, ky:y_end:stride, kx:x_end:stride] += patches[:, :, ky, kx]
    if pad:
        out = out[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(out)
