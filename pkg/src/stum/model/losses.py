"""Distances, pair losses and representative selection."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from ..numerics import Tensor
from ..numerics.functional import row_distance


def pair_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding dims differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distances between two [N, D] arrays."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.sqrt(((a - b) ** 2).sum(axis=1))


def contrastive_loss(d: float, z: int, m: float = 1.0) -> float:
    """``(1 - z) * d + z * max(0, m - d)``."""
    if d < 0 or m <= 0:
        raise ValueError("need d >= 0 and m > 0")
    return (1 - z) * d + z * max(0.0, m - d)


def alignment_loss(distances, targets) -> float:
    """Sum of absolute gaps between feature distances and target distances."""
    distances, targets = list(distances), list(targets)
    if len(distances) != len(targets):
        raise ValueError(f"{len(distances)} distances but {len(targets)} targets")
    return float(sum(abs(d - h) for d, h in zip(distances, targets)))


def batch_loss(fa: Tensor, fb: Tensor, z: np.ndarray, margin: float = 1.0, variant: str = "contrastive") -> Tensor:
    """Summed pair loss over a batch of embedding pairs.

    ``contrastive`` uses plain distances; ``contrastive_squared`` the
    half-squared form; ``alignment`` the absolute gap to the 0/1 target.
    """
    d = row_distance(fa, fb)
    z = np.asarray(z, dtype=fa.dtype)
    keep = 1.0 - z
    if variant == "contrastive":
        return (d * keep).sum() + ((margin - d).relu() * z).sum()
    if variant == "contrastive_squared":
        hinge = (margin - d).relu()
        return (d * d * (0.5 * keep)).sum() + (hinge * hinge * (0.5 * z)).sum()
    if variant == "alignment":
        return (d - z).abs().sum()
    raise ValueError(f"unknown loss variant {variant!r}")


def select_representative_index(window_features) -> int:
    """Index of the member closest to the window's mean feature (lowest index on ties).

    Ranks ``|n * F_i - sum(F)|^2`` in floating point, then re-ranks the
    members within rounding distance of the minimum in exact rational
    arithmetic, so genuine ties always resolve to the lowest index.
    """
    feats = np.asarray(window_features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("window must hold at least one feature vector")
    n = feats.shape[0]
    total = feats.sum(axis=0)
    dev = n * feats - total
    d = (dev * dev).sum(axis=1)
    scale = ((n * np.abs(feats) + np.abs(total)) ** 2).sum(axis=1).max()
    near = np.flatnonzero(d - d.min() <= 1e-9 * scale)
    if len(near) == 1:
        return int(near[0])
    exact_total = [sum(Fraction(v) for v in col) for col in feats.T.tolist()]
    exact = [sum((n * Fraction(v) - t) ** 2 for v, t in zip(feats[i].tolist(), exact_total)) for i in near]
    return int(near[exact.index(min(exact))])


def select_representative(window_features, window_inputs):
    if len(window_features) == 0:
        raise ValueError("empty window")
    if len(window_features) != len(window_inputs):
        raise ValueError("features and inputs differ in length")
    return window_inputs[select_representative_index(window_features)]
