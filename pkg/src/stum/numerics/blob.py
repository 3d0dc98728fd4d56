"""STUMT1 tensor blobs.

A blob is one ASCII header line ``STUMT1 <dtype> <ndim> <d0> <d1> ...``
followed by the raw little-endian payload in row-major order. ``f4`` is the
default; ``f8`` and ``i4`` are accepted for index and shadow-precision data.
"""

from __future__ import annotations

import os

import numpy as np

MAGIC = "STUMT1"
_DTYPES = {"f4": "<f4", "f8": "<f8", "i4": "<i4"}


class BlobFormatError(ValueError):
    pass


def encode(arr, dtype: str = "f4") -> bytes:
    if dtype not in _DTYPES:
        raise BlobFormatError(f"unsupported dtype {dtype!r}")
    arr = np.asarray(arr, dtype=_DTYPES[dtype], order="C")
    header = " ".join([MAGIC, dtype, str(arr.ndim), *map(str, arr.shape)]) + "\n"
    return header.encode("ascii") + arr.tobytes()


def decode(raw: bytes) -> np.ndarray:
    nl = raw.find(b"\n")
    if nl < 0:
        raise BlobFormatError("missing header line")
    fields = raw[:nl].decode("ascii").split()
    if len(fields) < 3 or fields[0] != MAGIC:
        raise BlobFormatError(f"bad magic/header: {raw[:nl]!r}")
    dtype, ndim = fields[1], int(fields[2])
    if dtype not in _DTYPES:
        raise BlobFormatError(f"unsupported dtype {dtype!r}")
    shape = tuple(int(d) for d in fields[3:])
    if len(shape) != ndim:
        raise BlobFormatError(f"header declares {ndim} dims but lists {len(shape)}")
    payload = raw[nl + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(_DTYPES[dtype]).itemsize
    if len(payload) != expected:
        raise BlobFormatError(f"payload has {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=_DTYPES[dtype]).reshape(shape)
    return arr.astype(arr.dtype.newbyteorder("="))


def save(path, arr, dtype: str = "f4"):
    with open(os.fspath(path), "wb") as fh:
        fh.write(encode(arr, dtype))


def load(path) -> np.ndarray:
    with open(os.fspath(path), "rb") as fh:
        return decode(fh.read())
