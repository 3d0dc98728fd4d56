"""Supervised judges that decide which category a decoded output depicts.

Graders see ground-truth labels; they exist only to score the model and
are never reachable from training code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import Adam, Tensor, build_network, conv, down, lrelu, no_grad, norm
from ..numerics.functional import cross_entropy


class GraderRefused(RuntimeError):
    """The grader's holdout accuracy is too low for it to be trusted as a judge."""


@dataclass
class GraderConfig:
    epochs: int = 30
    batch: int = 64
    lr: float = 2e-3
    min_accuracy: float = 0.95
    target_loss: float = 1e-3
    noise: float = 0.02


def grader_layers(input_shape, k: int) -> list:
    """Two stride-2 convolutions and one full-extent convolution onto ``k`` logits."""
    c, h, w = input_shape
    if h % 4 or w % 4:
        raise ValueError(f"grader input {input_shape} must have sides divisible by 4")
    base = 16 if c == 3 else 8
    return [down(base), norm(), lrelu(), down(2 * base), norm(), lrelu(), conv(k, kernel=h // 4)]


class Grader:
    def __init__(self, modality: str, input_shape, k: int, seed: int):
        if k < 2:
            raise ValueError("a grader needs at least two categories")
        self.modality, self.k, self.input_shape = modality, k, tuple(input_shape)
        self.net = build_network(grader_layers(self.input_shape, k), self.input_shape,
                                 np.random.default_rng([seed & 0xFFFFFFFF, 0x6A])).net
        self.holdout_accuracy = float("nan")

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.shape == self.input_shape[1:] and self.input_shape[0] == 1:
            x = x[None]
        if x.shape == self.input_shape:
            x = x[None]
        if x.ndim == len(self.input_shape) and self.input_shape[0] == 1:
            x = x[:, None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"{self.modality} grader expects {self.input_shape}, got {x.shape}")
        return x

    def logits(self, x, batch_size: int = 256) -> np.ndarray:
        x = self._batch(x)
        self.net.eval()
        with no_grad():
            return np.concatenate([self.net(Tensor(x[i:i + batch_size])).data
                                   for i in range(0, len(x), batch_size)])

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def accuracy(self, x, y) -> float:
        return float((self.predict(x) == np.asarray(y)).mean())


def train_grader(modality: str, train_x, train_y, holdout_x, holdout_y, seed: int,
                 cfg: GraderConfig | None = None, enforce: bool = True) -> Grader:
    """Cross-entropy training until the loss falls below ``target_loss`` or the epoch cap.

    Raises ``GraderRefused`` when ``enforce`` is set and holdout accuracy
    misses ``cfg.min_accuracy``.
    """
    cfg = cfg or GraderConfig()
    train_y, holdout_y = np.asarray(train_y, np.int64), np.asarray(holdout_y, np.int64)
    cats = np.unique(train_y)
    if len(cats) < 2:
        raise ValueError("grader training data covers a single category")
    k = int(max(train_y.max(), holdout_y.max() if holdout_y.size else 0)) + 1
    x = np.asarray(train_x, np.float32)
    if modality == "audio" and x.ndim == 3:
        x = x[:, None]
    grader = Grader(modality, x.shape[1:], k, seed)
    opt = Adam(grader.net.named_parameters(), lr=cfg.lr)
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x6B])
    for _ in range(cfg.epochs):
        grader.net.train()
        order = rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(order), cfg.batch):
            sel = order[s:s + cfg.batch]
            if len(sel) < 2:
                continue
            xb = x[sel]
            if cfg.noise:
                xb = xb + rng.normal(0.0, cfg.noise, xb.shape).astype(np.float32)
            opt.zero_grad()
            loss = cross_entropy(grader.net(Tensor(xb)), train_y[sel])
            loss.backward()
            opt.step()
            total += float(loss.data) * len(sel)
        if total / len(x) < cfg.target_loss:
            break
    grader.net.eval()
    grader.holdout_accuracy = grader.accuracy(holdout_x, holdout_y)
    if enforce and grader.holdout_accuracy < cfg.min_accuracy:
        raise GraderRefused(f"{modality} grader reached {grader.holdout_accuracy:.4f} holdout accuracy, "
                            f"below the {cfg.min_accuracy:.2f} needed to act as a judge")
    return grader
