"""Per-category view rings and variant splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .categories import ANGLES


@dataclass(frozen=True)
class ViewRing:
    category_id: int
    angles: tuple
    role: str  # "train" or "test"

    def __len__(self):
        return len(self.angles)

    def successor(self, i: int) -> int:
        return (i + 1) % len(self.angles)


@dataclass(frozen=True)
class CategorySplit:
    train_ring: ViewRing
    test_ring: ViewRing
    train_variants: tuple
    test_variants: tuple


def split_views_and_variants(
    k: int, n_test_views: int, n_test_variants: int, seed: int, n_variants: int = 50,
    ring_angles: list | None = None,
) -> list[CategorySplit]:
    """Draw disjoint train/test angle sets and variant ids for ``k`` categories.

    ``ring_angles`` gives each category's own angle list (for ingested rings
    with other than 72 views); the test count is then scaled by ring size.
    """
    if not 0 <= n_test_views < len(ANGLES):
        raise ValueError(f"n_test_views must lie in [0, {len(ANGLES)})")
    if not 0 <= n_test_variants < n_variants:
        raise ValueError(f"n_test_variants must lie in [0, {n_variants})")
    if ring_angles is not None and len(ring_angles) != k:
        raise ValueError(f"{len(ring_angles)} rings given for {k} categories")
    out = []
    for c in range(k):
        angles = tuple(ring_angles[c]) if ring_angles is not None else ANGLES
        n_test = n_test_views if len(angles) == len(ANGLES) else int(round(n_test_views * len(angles) / len(ANGLES)))
        if n_test >= len(angles):
            raise ValueError(f"category {c}: {n_test} test views leave no training ring")
        rng = np.random.default_rng([seed & 0xFFFFFFFF, c, 0x5B])
        test_angles = set(rng.choice(angles, size=n_test, replace=False).tolist())
        test_vars = set(rng.choice(n_variants, size=n_test_variants, replace=False).tolist())
        out.append(CategorySplit(
            train_ring=ViewRing(c, tuple(a for a in angles if a not in test_angles), "train"),
            test_ring=ViewRing(c, tuple(a for a in angles if a in test_angles), "test"),
            train_variants=tuple(v for v in range(n_variants) if v not in test_vars),
            test_variants=tuple(sorted(test_vars)),
        ))
    return out
