"""Central finite-difference gradient checking in 64-bit shadow precision."""

from __future__ import annotations

import numpy as np

from .layers import Module
from .tensor import Tensor


def _projection_loss(out: Tensor, rng: np.random.Generator):
    weights = rng.standard_normal(out.shape)
    return lambda y: (y * weights).sum()


def grad_check(
    network: Module,
    input,
    eps: float = 1e-5,
    loss_fn=None,
    n_coords: int = 12,
    seed: int = 0,
    check_input: bool = True,
    refinements: int = 3,
) -> float:
    """Max relative error between backprop and finite differences.

    The network is copied to float64 first. ``loss_fn`` maps the network
    output to a scalar Tensor; by default a fixed random projection of the
    output is used so every output coordinate carries gradient. Up to
    ``n_coords`` coordinates are sampled from each parameter (and from the
    input when ``check_input``).

    Leaky-ReLU kinks and strong curvature spoil a central difference whose
    step straddles them. When the forward and backward one-sided slopes
    disagree, the step is divided by 10 (at most ``refinements`` times)
    until both sides see the same linear piece; if none does, the step
    with the closest one-sided slopes is used, which also sidesteps
    roundoff at tiny steps. A wrong gradient stays wrong at every step
    size, so this does not mask real errors.
    """
    rng = np.random.default_rng(seed)
    net = network.astype(np.float64)
    x = Tensor(np.asarray(input, dtype=np.float64), requires_grad=check_input)
    if loss_fn is None:
        with_out = net(Tensor(x.data))
        loss_fn = _projection_loss(with_out, rng)

    def evaluate() -> float:
        return float(loss_fn(net(Tensor(x.data))).data)

    def central(flat, i, h, f0):
        orig = flat[i]
        flat[i] = orig + h
        up = evaluate()
        flat[i] = orig - h
        dn = evaluate()
        flat[i] = orig
        fwd, bwd = (up - f0) / h, (f0 - dn) / h
        gap = abs(fwd - bwd)
        return (up - dn) / (2.0 * h), gap, gap <= 1e-4 * max(abs(fwd), abs(bwd), 1e-6)

    net.zero_grad()
    loss = loss_fn(net(x))
    loss.backward()

    targets = [(p.data, p.grad) for p in net.parameters()]
    if check_input:
        targets.append((x.data, x.grad))

    f0 = evaluate()
    worst = 0.0
    for values, analytic in targets:
        flat, gflat = values.reshape(-1), analytic.reshape(-1)
        picks = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for i in picks:
            h = eps
            numeric, gap, smooth = central(flat, i, h, f0)
            best_h = h
            for _ in range(refinements):
                if smooth:
                    break
                h /= 10.0
                cand, cand_gap, smooth = central(flat, i, h, f0)
                if smooth or cand_gap < gap:
                    numeric, gap, best_h = cand, cand_gap, h
            a = float(gflat[i])
            # differences below the quotient's roundoff resolution carry no signal
            resolution = np.finfo(np.float64).eps * max(abs(f0), 1.0) / best_h
            denom = max(abs(a), abs(numeric), 1e-8, 1e5 * resolution)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
