"""Layer modules and the declarative network builder."""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor

LAYER_KINDS = ("conv2d", "downsample", "norm", "leaky_relu", "affine", "sphere")


class Module:
    """Minimal container with parameter/buffer discovery in attribute order."""

    def __init__(self):
        self.training = True

    def forward(self, x: Tensor) -> Tensor:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                yield from (v for v in value if isinstance(v, Module))

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield from v.named_parameters(f"{prefix}{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for key, value in vars(self).items():
            if key.startswith("running_") and isinstance(value, np.ndarray):
                yield f"{prefix}{key}", value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield from v.named_buffers(f"{prefix}{i}.")

    def train(self, mode: bool = True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing entries: {sorted(missing)}")
        for name, p in params.items():
            p.value = state[name]
        for name, buf in buffers.items():
            src = np.asarray(state[name], dtype=buf.dtype)
            if src.shape != buf.shape:
                raise ValueError(f"buffer {name} has shape {src.shape}, expected {buf.shape}")
            buf[...] = src

    def astype(self, dtype) -> Module:
        """Deep copy with every parameter and buffer cast to ``dtype``."""
        clone = copy.deepcopy(self)
        for p in clone.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        for mod in clone.modules():
            for key, value in list(vars(mod).items()):
                if key.startswith("running_") and isinstance(value, np.ndarray):
                    setattr(mod, key, value.astype(dtype))
        return clone

    def modules(self):
        yield self
        for child in self.children():
            yield from child.modules()


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1, pad: int = 0,
                 bias: bool = True, rng: np.random.Generator | None = None, slope: float = 0.1):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_ch * kernel * kernel
        bound = _kaiming_bound(fan_in, slope)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_ch, in_ch, kernel, kernel)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_ch, dtype=np.float32)) if bias else None
        self.stride, self.pad = stride, pad

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class Affine(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None,
                 slope: float = 0.1):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = _kaiming_bound(in_features, slope)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_features, in_features)).astype(np.float32))
        self.bias = Parameter(np.zeros(out_features, dtype=np.float32))

    def forward(self, x):
        if x.ndim > 2:
            x = x.flatten()
        return F.affine(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        super().__init__()
        self.gamma = Parameter(np.ones(channels, dtype=np.float32))
        self.beta = Parameter(np.zeros(channels, dtype=np.float32))
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.eps, self.momentum = eps, momentum

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class LeakyReLU(Module):
    def __init__(self, slope: float = 0.1):
        super().__init__()
        self.slope = slope

    def forward(self, x):
        return F.leaky_relu(x, self.slope)


class SphereProjection(Module):
    """Rescale each sample to Euclidean norm ``radius`` (all non-batch axes pooled)."""

    def __init__(self, radius: float = 0.5, eps: float = 1e-12):
        super().__init__()
        self.radius, self.eps = radius, eps

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        norm = ((flat * flat).sum(axis=1, keepdims=True) + self.eps).sqrt()
        return (flat / norm * self.radius).reshape(x.shape)


class Reshape(Module):
    """Shape plumbing; keeps the batch axis."""

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(shape)

    def forward(self, x):
        return x.reshape(x.shape[0], *self.shape)


class Sequential(Module):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


def _kaiming_bound(fan_in: int, slope: float) -> float:
    gain = math.sqrt(2.0 / (1.0 + slope * slope))
    return gain * math.sqrt(3.0 / fan_in)


@dataclass
class LayerSpec:
    kind: str
    out_channels: int | None = None
    out_features: int | None = None
    kernel: int | None = None
    stride: int | None = None
    pad: int | None = None
    bias: bool = True
    slope: float = 0.1
    eps: float = 1e-5
    momentum: float = 0.9
    radius: float = 0.5

    def to_dict(self) -> dict:
        defaults = LayerSpec(self.kind)
        return {k: v for k, v in asdict(self).items() if k == "kind" or v != getattr(defaults, k)}

    @classmethod
    def from_dict(cls, d: dict) -> LayerSpec:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown layer fields: {sorted(unknown)}")
        return cls(**d)


def conv(out_channels, kernel=3, stride=1, pad=0, bias=True) -> LayerSpec:
    return LayerSpec("conv2d", out_channels=out_channels, kernel=kernel, stride=stride, pad=pad, bias=bias)


def down(out_channels, kernel=4, pad=1, bias=False) -> LayerSpec:
    return LayerSpec("downsample", out_channels=out_channels, kernel=kernel, stride=2, pad=pad, bias=bias)


def norm(eps=1e-5, momentum=0.9) -> LayerSpec:
    return LayerSpec("norm", eps=eps, momentum=momentum)


def lrelu(slope=0.1) -> LayerSpec:
    return LayerSpec("leaky_relu", slope=slope)


def sphere(radius=0.5) -> LayerSpec:
    return LayerSpec("sphere", radius=radius)


def dense(out_features) -> LayerSpec:
    return LayerSpec("affine", out_features=out_features)


@dataclass
class BuiltNetwork:
    net: Sequential
    output_shape: tuple
    shapes: list = field(default_factory=list)


def build_network(specs, input_shape, rng: np.random.Generator, output_shape=None) -> BuiltNetwork:
    """Validate ``specs`` against ``input_shape`` (no batch axis) and build the stack.

    Raises ``ValueError`` on any invalid hyperparameter or shape combination,
    before any parameter is created.
    """
    shape = tuple(input_shape)
    plan = []
    shapes = [shape]
    for i, spec in enumerate(specs):
        if spec.kind not in LAYER_KINDS:
            raise ValueError(f"layer {i}: unknown kind {spec.kind!r}")
        if spec.kind in ("conv2d", "downsample"):
            if len(shape) != 3:
                raise ValueError(f"layer {i}: {spec.kind} needs a [C,H,W] input, got {shape}")
            k = spec.kernel if spec.kernel is not None else (4 if spec.kind == "downsample" else 3)
            stride = spec.stride if spec.stride is not None else (2 if spec.kind == "downsample" else 1)
            pad = spec.pad if spec.pad is not None else (1 if spec.kind == "downsample" else 0)
            if spec.kind == "downsample" and stride != 2:
                raise ValueError(f"layer {i}: downsample is a stride-2 convolution")
            if not spec.out_channels or spec.out_channels < 1 or k < 1 or stride < 1 or pad < 0:
                raise ValueError(f"layer {i}: invalid convolution hyperparameters {spec}")
            c, h, w = shape
            if k > h + 2 * pad or k > w + 2 * pad:
                raise ValueError(f"layer {i}: kernel {k} exceeds padded input {h}x{w} (pad {pad})")
            shape = (spec.out_channels, F.conv_output_size(h, k, stride, pad), F.conv_output_size(w, k, stride, pad))
            plan.append(("conv", c, spec.out_channels, k, stride, pad, spec.bias))
        elif spec.kind == "norm":
            if spec.eps <= 0 or not 0.0 <= spec.momentum < 1.0:
                raise ValueError(f"layer {i}: invalid normalisation hyperparameters")
            plan.append(("norm", shape[0], spec.eps, spec.momentum))
        elif spec.kind == "leaky_relu":
            if not 0.0 <= spec.slope < 1.0:
                raise ValueError(f"layer {i}: leaky-ReLU slope must lie in [0, 1)")
            plan.append(("lrelu", spec.slope))
        elif spec.kind == "sphere":
            if not spec.radius > 0:
                raise ValueError(f"layer {i}: sphere radius must be positive")
            plan.append(("sphere", spec.radius))
        else:
            if not spec.out_features or spec.out_features < 1:
                raise ValueError(f"layer {i}: affine needs out_features >= 1")
            plan.append(("affine", int(np.prod(shape)), spec.out_features))
            shape = (spec.out_features,)
        shapes.append(shape)

    if output_shape is not None and int(np.prod(shape)) != int(np.prod(output_shape)):
        raise ValueError(f"network yields {shape}, cannot reshape to {tuple(output_shape)}")

    layers = []
    for step in plan:
        if step[0] == "conv":
            _, c_in, c_out, k, stride, pad, bias = step
            layers.append(Conv2d(c_in, c_out, k, stride, pad, bias=bias, rng=rng))
        elif step[0] == "norm":
            layers.append(BatchNorm(step[1], eps=step[2], momentum=step[3]))
        elif step[0] == "lrelu":
            layers.append(LeakyReLU(step[1]))
        elif step[0] == "sphere":
            layers.append(SphereProjection(step[1]))
        else:
            layers.append(Affine(step[1], step[2], rng=rng))
    final = tuple(output_shape) if output_shape is not None else (int(np.prod(shape)),)
    layers.append(Reshape(final))
    return BuiltNetwork(Sequential(layers), final, shapes)
