"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def hyperparameters(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "step": self.step}


class Adam:
    """Adam over a fixed, named parameter list.

    Moments live in ``state`` keyed by parameter name so they can be
    checkpointed and restored independently of object identity.
    """

    def __init__(self, named_params, state: OptimizerState | None = None, **hyper):
        self.params = list(named_params)
        names = [n for n, _ in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        self.state = state if state is not None else OptimizerState(**hyper)
        for name, p in self.params:
            self.state.m.setdefault(name, np.zeros_like(p.data))
            self.state.v.setdefault(name, np.zeros_like(p.data))
            if self.state.m[name].shape != p.data.shape:
                raise ValueError(f"moment shape mismatch for {name}")

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        s = self.state
        s.step += 1
        c1 = 1.0 - s.beta1 ** s.step
        c2 = 1.0 - s.beta2 ** s.step
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            m, v = s.m[name], s.v[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            update = s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)
            p.data -= update.astype(p.data.dtype, copy=False)
