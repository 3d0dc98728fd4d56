# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled patch-extraction kernels for 2-D convolution.

Row layout of the column matrix is (n, oy, ox); column layout is (c, ky, kx).
Both functions are bit-compatible with the NumPy fallback in ``_fallback``
for ``im2col``; ``col2im`` accumulates in a fixed loop order.
"""
import numpy as np
cimport numpy as cnp

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int k, int stride, int pad):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    cdef Py_ssize_t n, c, ky, kx, oy, ox, iy, ix, row, col
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((N * Ho * Wo, C * k * k), dtype=dtype)
    cdef real[:, ::1] out = out_arr
    with nogil:
        for n in range(N):
            for oy in range(Ho):
                for ox in range(Wo):
                    row = (n * Ho + oy) * Wo + ox
                    col = 0
                    for c in range(C):
                        for ky in range(k):
                            iy = oy * stride + ky - pad
                            if iy < 0 or iy >= H:
                                col = col + k
                                continue
                            for kx in range(k):
                                ix = ox * stride + kx - pad
                                if 0 <= ix < W:
                                    out[row, col] = x[n, c, iy, ix]
                                col = col + 1
    return out_arr


def col2im(real[:, ::1] cols, Py_ssize_t N, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W,
           int k, int stride, int pad):
    cdef Py_ssize_t Ho = (H + 2 * pad - k) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * pad - k) // stride + 1
    cdef Py_ssize_t n, c, ky, kx, oy, ox, iy, ix, row, col
    if cols.shape[0] != N * Ho * Wo or cols.shape[1] != C * k * k:
        raise ValueError("column matrix shape does not match image geometry")
    dtype = np.float32 if real is float else np.float64
    out_arr = np.zeros((N, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] out = out_arr
    with nogil:
        for n in range(N):
            for oy in range(Ho):
                for ox in range(Wo):
                    row = (n * Ho + oy) * Wo + ox
                    col = 0
                    for c in range(C):
                        for ky in range(k):
                            iy = oy * stride + ky - pad
                            if iy < 0 or iy >= H:
                                col = col + k
                                continue
                            for kx in range(k):
                                ix = ox * stride + kx - pad
                                if 0 <= ix < W:
                                    out[n, c, iy, ix] += cols[row, col]
                                col = col + 1
    return out_arr
