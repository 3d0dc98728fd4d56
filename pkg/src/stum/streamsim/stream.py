"""Interleaved fixation/saccade streams with time-aligned spoken names."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .categories import (
    ANGLES,
    N_BANDS,
    NOISE_FLOOR,
    CategorySpec,
    make_categories,
    render_ring,
    synth_spectrogram,
)
from .splits import CategorySplit, split_views_and_variants

BLANK = -1


@dataclass
class StreamConfig:
    k: int = 10
    image_size: int = 32
    n_fixations: int = 200
    frame_rate: int = 30
    fixation_frames: tuple = (90, 120)
    saccade_frames: tuple = (6, 12)
    exclusion_frames: int = 400
    n_test_views: int = 16
    n_variants: int = 50
    n_test_variants: int = 10
    dataset_seed: int = 0

    def __post_init__(self):
        self.fixation_frames = tuple(self.fixation_frames)
        self.saccade_frames = tuple(self.saccade_frames)


@dataclass(frozen=True)
class Fixation:
    start: int
    length: int
    category: int
    ring_start: int
    direction: int

    @property
    def mid(self) -> int:
        return self.start + self.length // 2

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class Placement:
    start: int
    length: int
    category: int
    variant: int
    fixation: int

    @property
    def mid(self) -> int:
        return self.start + self.length // 2


@dataclass
class World:
    """Everything a stream is cut from: categories, splits and the rendered view bank."""

    config: StreamConfig
    categories: list
    splits: list
    views: np.ndarray  # [V, 3, S, S]
    view_category: np.ndarray
    view_angle: np.ndarray
    view_lookup: dict = field(default_factory=dict)

    def view_index(self, category: int, angle: int) -> int:
        return self.view_lookup[(category, angle)]

    def ring_indices(self, category: int, role: str = "train") -> np.ndarray:
        split = self.splits[category]
        ring = split.train_ring if role == "train" else split.test_ring
        return np.array([self.view_index(category, a) for a in ring.angles], dtype=np.int64)

    def segment(self, category: int, variant: int) -> np.ndarray:
        return synth_spectrogram(self.categories[category], variant)


def build_world(config: StreamConfig, categories: list[CategorySpec] | None = None, rings: list | None = None) -> World:
    """Render (or adopt) every category's view ring and draw the splits.

    ``rings`` replaces the procedural renders with ingested image rings
    (objects with ``angles`` and ``images``); names are still synthesized.
    """
    if config.k < 2:
        raise ValueError("at least two categories are needed to form negatives")
    if rings is not None and len(rings) != config.k:
        raise ValueError(f"{len(rings)} image rings for k={config.k}")
    cats = categories if categories is not None else make_categories(config.dataset_seed, config.k)
    ring_angles = [tuple(r.angles) for r in rings] if rings is not None else None
    splits = split_views_and_variants(config.k, config.n_test_views, config.n_test_variants,
                                      config.dataset_seed, config.n_variants, ring_angles)
    views, vcat, vang, lookup = [], [], [], {}
    for c, spec in enumerate(cats):
        if rings is not None:
            images, angles = np.asarray(rings[c].images, np.float32), tuple(rings[c].angles)
        else:
            images, angles = render_ring(spec, config.image_size), ANGLES
        if images.shape[1:] != (3, config.image_size, config.image_size):
            raise ValueError(f"category {c}: views of shape {images.shape[1:]} do not match image size")
        for angle in angles:
            lookup[(spec.category_id, int(angle))] = len(vcat)
            vcat.append(spec.category_id)
            vang.append(int(angle))
        views.append(images)
    return World(config, cats, splits, np.concatenate(views), np.array(vcat, np.int32),
                 np.array(vang, np.int32), lookup)


@dataclass
class ObservedStream:
    """The learner's view of a stream: frames, blank mask and audio only."""

    views: np.ndarray
    frame_view: np.ndarray
    audio: np.ndarray
    frame_rate: int = 30

    def __len__(self):
        return len(self.frame_view)

    @property
    def blank(self) -> np.ndarray:
        return self.frame_view == BLANK

    def images(self, idx) -> np.ndarray:
        vi = self.frame_view[np.asarray(idx)]
        if np.any(vi == BLANK):
            raise ValueError("requested image of a blank frame")
        return self.views[vi]

    def visible_runs(self) -> list[tuple[int, int]]:
        """Maximal [start, end) runs of non-blank frames."""
        vis = np.concatenate([[False], ~self.blank, [False]]).astype(np.int8)
        edges = np.diff(vis)
        return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


@dataclass
class MultimodalStream(ObservedStream):
    """A generated stream including the hidden ground truth used for grading."""

    labels: np.ndarray = None
    fixations: list = field(default_factory=list)
    placements: list = field(default_factory=list)

    def frame(self, i: int):
        v = self.frame_view[i]
        return None if v == BLANK else self.views[v]

    def observed(self) -> ObservedStream:
        return ObservedStream(self.views, self.frame_view, self.audio, self.frame_rate)


def _schedule_category(rng, fixations, start, k, exclusion):
    recent = {f.category for f in fixations if f.end - 1 >= start - exclusion}
    allowed = [c for c in range(k) if c not in recent]
    if not allowed:
        raise ValueError(f"no category is free of the {exclusion}-frame exclusion window with k={k}")
    return int(rng.choice(allowed))


def generate_stream(config: StreamConfig, seed: int, world: World | None = None) -> MultimodalStream:
    """Simulate one training stream from the train rings and train name variants."""
    world = world if world is not None else build_world(config)
    rng = np.random.default_rng([config.dataset_seed & 0xFFFFFFFF, seed & 0xFFFFFFFF, 0x57])
    lo_f, hi_f = config.fixation_frames
    lo_s, hi_s = config.saccade_frames

    fixations, saccades, t = [], [], 0
    for i in range(config.n_fixations):
        if i > 0:
            gap = int(rng.integers(lo_s, hi_s + 1))
            saccades.append(gap)
            t += gap
        cat = _schedule_category(rng, fixations, t, config.k, config.exclusion_frames)
        length = int(rng.integers(lo_f, hi_f + 1))
        ring_len = len(world.splits[cat].train_ring)
        fixations.append(Fixation(t, length, cat, int(rng.integers(ring_len)), int(rng.choice([-1, 1]))))
        t += length

    total = t
    frame_view = np.full(total, BLANK, dtype=np.int32)
    labels = np.full(total, BLANK, dtype=np.int32)
    audio = rng.uniform(0.0, NOISE_FLOOR / np.sqrt(N_BANDS), (N_BANDS, total)).astype(np.float32)
    occupied = np.zeros(total, dtype=bool)
    placements = []
    for fi, fx in enumerate(fixations):
        ring = world.ring_indices(fx.category, "train")
        steps = (fx.ring_start + fx.direction * np.arange(fx.length)) % len(ring)
        frame_view[fx.start:fx.end] = ring[steps]
        labels[fx.start:fx.end] = fx.category

        variants = world.splits[fx.category].train_variants
        variant = int(variants[int(rng.integers(len(variants)))])
        seg = world.segment(fx.category, variant)
        length = seg.shape[1]
        start = fx.mid - length // 2
        if start < fx.start or start + length > fx.end:
            raise AssertionError("name segment spills outside its fixation")
        if occupied[start:start + length].any():
            raise AssertionError("name segments overlap")
        occupied[start:start + length] = True
        audio[:, start:start + length] += seg
        placements.append(Placement(start, length, fx.category, variant, fi))

    return MultimodalStream(
        views=world.views, frame_view=frame_view, audio=audio, frame_rate=config.frame_rate,
        labels=labels, fixations=fixations, placements=placements,
    )
