"""Tensor, reverse-mode differentiation and the layer set used by the encoders."""

from . import blob, functional
from .gradcheck import grad_check
from .kernels import BACKEND
from .layers import (
    LAYER_KINDS,
    Affine,
    BatchNorm,
    BuiltNetwork,
    Conv2d,
    LayerSpec,
    LeakyReLU,
    Module,
    Reshape,
    Sequential,
    SphereProjection,
    build_network,
    conv,
    dense,
    down,
    lrelu,
    norm,
    sphere,
)
from .optim import Adam, OptimizerState
from .tensor import Parameter, Tensor, no_grad, tensor

__all__ = [
    "BACKEND", "LAYER_KINDS", "Adam", "Affine", "BatchNorm", "BuiltNetwork", "Conv2d", "LayerSpec",
    "LeakyReLU", "Module", "OptimizerState", "Parameter", "Reshape", "Sequential", "SphereProjection", "Tensor", "blob",
    "build_network", "conv", "dense", "down", "functional", "grad_check", "lrelu", "no_grad", "norm",
    "sphere", "tensor",
]
