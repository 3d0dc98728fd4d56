"""Differentiable layer primitives with fused backward passes."""

from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, _lift


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` [N,C,H,W] (or [C,H,W]) with ``weight`` [O,C,k,k]."""
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape(1, *x.shape)
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c:
        raise ValueError(f"input has {c} channels but kernel expects {ci}")
    if k != k2:
        raise ValueError("only square kernels are supported")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if k > h + 2 * pad or k > w + 2 * pad:
        raise ValueError(f"kernel {k} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    ho, wo = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)

    cols = kernels.im2col(x.data, k, stride, pad)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    y = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))
    x_shape = x.shape

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, o)
        dx = kernels.col2im(g2 @ wmat, x_shape, k, stride, pad) if x.requires_grad else None
        dw = (g2.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return dx, dw
        return dx, dw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out_t = Tensor._make(y, parents, backward)
    return out_t.reshape(o, ho, wo) if squeeze else out_t


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    if not 0.0 <= slope < 1.0:
        raise ValueError("leaky-ReLU slope must lie in [0, 1)")
    scale = np.where(x.data >= 0, 1.0, slope).astype(x.dtype)
    return Tensor._make(x.data * scale, (x,), lambda g: (g * scale,))


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped [out, in]."""
    a, w = x.data, weight.data
    out = a @ w.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        dx = g @ w if x.requires_grad else None
        dw = g.T @ a if weight.requires_grad else None
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalisation over every axis except 1.

    ``running_*`` buffers are updated in place in training mode as
    ``momentum * running + (1 - momentum) * batch``.
    """
    axes = (0,) if x.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1, 1)
    a = x.data
    g_ = gamma.data.reshape(bshape)
    if training:
        count = a.size // a.shape[1]
        if count < 2:
            raise ValueError("batch normalisation in training mode needs more than one value per channel")
        mu = a.mean(axis=axes)
        var = a.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (a - mu.reshape(bshape)) * inv.reshape(bshape)

        def backward(g):
            dbeta = g.sum(axis=axes)
            dgamma = (g * xhat).sum(axis=axes)
            dxhat = g * g_
            dx = None
            if x.requires_grad:
                s1 = dxhat.sum(axis=axes).reshape(bshape)
                s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
                dx = (inv.reshape(bshape) / count) * (count * dxhat - s1 - xhat * s2)
            return dx, dgamma, dbeta
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (a - running_mean.reshape(bshape)) * inv.reshape(bshape)

        def backward(g):
            dx = g * g_ * inv.reshape(bshape) if x.requires_grad else None
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = (xhat * g_ + beta.data.reshape(bshape)).astype(a.dtype, copy=False)
    return Tensor._make(out, (x, gamma, beta), backward)


def row_distance(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Euclidean distance between matching rows of two [N, D] tensors.

    ``eps`` keeps the derivative finite when two rows coincide.
    """
    b = _lift(b, a.dtype)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a.data - b.data
    d = np.sqrt((diff * diff).sum(axis=-1) + eps)

    def backward(g):
        unit = diff * (g / d)[..., None]
        return unit, -unit

    return Tensor._make(d, (a, b), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    z = logits.data
    labels = np.asarray(labels, dtype=np.int64)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsum
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return Tensor._make(np.asarray(loss, dtype=z.dtype), (logits,), backward)


def mse_loss(pred: Tensor, target) -> Tensor:
    diff = pred - _lift(target, pred.dtype)
    return (diff * diff).mean()
