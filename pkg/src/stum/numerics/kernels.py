"""Backend selection for the convolution hot loops.

The compiled Cython core is preferred. Setting ``STUM_PURE_PYTHON=1`` or a
missing build falls back to the NumPy implementation.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "numpy"
_impl = _fallback

if os.environ.get("STUM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _fallback


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    return _impl.im2col(np.ascontiguousarray(x), k, stride, pad)


def col2im(cols: np.ndarray, shape, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = shape
    return _impl.col2im(np.ascontiguousarray(cols), n, c, h, w, k, stride, pad)
