"""Balanced same/different pair sets and the halfway-threshold protocol."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model.losses import pairwise_distances

PROTOCOLS = {"visual": ("image", "image"), "audiovisual": ("image", "audio")}


@dataclass
class PairGroup:
    """Pairs of one modality combination. ``a``/``b`` index the item arrays."""

    a_modality: str
    b_modality: str
    a: np.ndarray
    b: np.ndarray
    same: np.ndarray

    def __len__(self):
        return len(self.same)


@dataclass
class PairEvalSet:
    image_items: np.ndarray
    image_labels: np.ndarray
    audio_items: np.ndarray | None
    audio_labels: np.ndarray | None
    groups: dict = field(default_factory=dict)  # protocol -> PairGroup
    seed: int = 0

    def __len__(self):
        return sum(len(g) for g in self.groups.values())

    def items(self, modality: str) -> np.ndarray:
        return self.image_items if modality == "image" else self.audio_items


def _pick(rng, candidates_by_label, label, exclude=None):
    pool = candidates_by_label[label]
    if exclude is not None:
        pool = pool[pool != exclude]
    return int(pool[rng.integers(len(pool))])


def build_pair_evalset(image_items, image_labels, audio_items=None, audio_labels=None,
                       protocols=("visual",), rounds: int = 2, seed: int = 0) -> PairEvalSet:
    """For every test image draw one same-category and one other-category partner, ``rounds`` times.

    Visual partners are other test images; audiovisual partners are test
    audio items. Each protocol yields ``2 * rounds * n_images`` pairs.
    """
    image_labels = np.asarray(image_labels)
    unknown = set(protocols) - set(PROTOCOLS)
    if unknown:
        raise ValueError(f"unknown protocols {sorted(unknown)}")
    if "audiovisual" in protocols and audio_items is None:
        raise ValueError("the audiovisual protocol needs audio items")
    ev = PairEvalSet(np.asarray(image_items), image_labels,
                     None if audio_items is None else np.asarray(audio_items),
                     None if audio_labels is None else np.asarray(audio_labels), seed=seed)
    cats = np.unique(image_labels)
    if len(cats) < 2:
        raise ValueError("pair evaluation needs at least two categories")
    for pi, proto in enumerate(protocols):
        a_mod, b_mod = PROTOCOLS[proto]
        b_labels = image_labels if b_mod == "image" else ev.audio_labels
        by_label = {int(c): np.flatnonzero(b_labels == c) for c in cats}
        for c, pool in by_label.items():
            if len(pool) < (2 if b_mod == "image" else 1):
                raise ValueError(f"category {c} has too few {b_mod} items for positive pairs")
        rng = np.random.default_rng([seed & 0xFFFFFFFF, pi, 0xE7])
        a_idx, b_idx, same = [], [], []
        for _ in range(rounds):
            for i, c in enumerate(image_labels.tolist()):
                a_idx.append(i)
                b_idx.append(_pick(rng, by_label, c, exclude=i if b_mod == "image" else None))
                same.append(True)
                others = cats[cats != c]
                a_idx.append(i)
                b_idx.append(_pick(rng, by_label, int(others[rng.integers(len(others))])))
                same.append(False)
        ev.groups[proto] = PairGroup(a_mod, b_mod, np.asarray(a_idx), np.asarray(b_idx), np.asarray(same))
    return ev


def threshold_accuracy(distances, same) -> dict:
    """Halfway threshold between the smallest and largest distance; ``d < theta`` means same."""
    d = np.asarray(distances, dtype=np.float64)
    same = np.asarray(same, dtype=bool)
    if d.size == 0:
        raise ValueError("empty evaluation set")
    lo, hi = float(d.min()), float(d.max())
    theta = (lo + hi) / 2.0
    return {"accuracy": float(((d < theta) == same).mean()), "threshold": theta, "min": lo, "max": hi,
            "pairs": int(d.size)}


def group_distances(ev: PairEvalSet, group: PairGroup, embed) -> np.ndarray:
    """``embed(items, modality)`` returns one feature row per item."""
    fa = embed(ev.items(group.a_modality), group.a_modality)
    fb = fa if group.b_modality == group.a_modality else embed(ev.items(group.b_modality), group.b_modality)
    return pairwise_distances(fa[group.a], fb[group.b])


def pair_threshold_accuracy(ev: PairEvalSet, model, shared: bool = True) -> dict:
    """Per-protocol accuracies under one pooled threshold (default) or one threshold per protocol."""
    if len(ev) == 0:
        raise ValueError("empty evaluation set")
    cache = {}

    def embed(items, modality):
        if modality not in cache:
            cache[modality] = np.atleast_2d(model.encode(items, modality))
        return cache[modality]

    dists = {p: group_distances(ev, g, embed) for p, g in ev.groups.items()}
    out = {"mode": "shared" if shared else "per_protocol", "protocols": {}}
    if shared:
        pooled = threshold_accuracy(np.concatenate(list(dists.values())),
                                    np.concatenate([g.same for g in ev.groups.values()]))
        theta = pooled["threshold"]
        out.update({k: pooled[k] for k in ("threshold", "min", "max", "accuracy")})
        for p, g in ev.groups.items():
            d = dists[p]
            out["protocols"][p] = {"accuracy": float(((d < theta) == g.same).mean()), "threshold": theta,
                                   "min": float(d.min()), "max": float(d.max()), "pairs": len(g),
                                   "same_mean": float(d[g.same].mean()), "diff_mean": float(d[~g.same].mean())}
    else:
        for p, g in ev.groups.items():
            r = threshold_accuracy(dists[p], g.same)
            r.update(same_mean=float(dists[p][g.same].mean()), diff_mean=float(dists[p][~g.same].mean()))
            out["protocols"][p] = r
    return out
