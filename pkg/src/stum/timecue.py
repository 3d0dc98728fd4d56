"""Training pairs from time alone.

Positives are inputs that fire together (consecutive frames, or a frame and
the name heard around it); negatives come from a fixed lookback gap. No
function in this module reads hidden labels.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass

import numpy as np

from .streamsim.categories import N_BANDS, NOISE_FLOOR
from .streamsim.stream import ObservedStream

CROP_COLUMNS = 54  # 1.8 s at one column per frame period
CROP_SIZE = 64
SEARCH_FRAMES = 60  # +-2 s at 30 fps
ENERGY_THRESHOLD = 10.0 * NOISE_FLOOR


@dataclass(frozen=True)
class TimeCueFunction:
    """Target feature distance as a function of frame distance.

    Defined only inside the fire-together window (0) and at the negative
    gap (1); every other distance is deliberately undefined.
    """

    window: int = 1
    gap: int = 300

    def __post_init__(self):
        if self.window < 0 or self.gap <= self.window:
            raise ValueError("need 0 <= window < gap")


def target_distance(delta_frames: int, f: TimeCueFunction = TimeCueFunction()) -> float:
    delta = abs(int(delta_frames))
    if delta <= f.window:
        return 0.0
    if delta == f.gap:
        return 1.0
    raise ValueError(f"target distance is undefined at {delta} frames (window {f.window}, gap {f.gap})")


@dataclass(frozen=True)
class AudioCrop:
    data: np.ndarray  # [64, 64]
    region: tuple  # [start, end) columns of the high-energy run
    centre: int


def crop_at(audio: np.ndarray, centre: int) -> np.ndarray:
    """64x64 crop: 54 columns centred on ``centre``, zero padded 5 columns per side."""
    out = np.zeros((N_BANDS, CROP_SIZE), dtype=np.float32)
    half = CROP_COLUMNS // 2
    lo, hi = centre - half, centre + half
    src_lo, src_hi = max(lo, 0), min(hi, audio.shape[1])
    pad = (CROP_SIZE - CROP_COLUMNS) // 2
    if src_hi > src_lo:
        out[:, pad + src_lo - lo:pad + src_hi - lo] = audio[:, src_lo:src_hi]
    return out


def audio_item(segment: np.ndarray) -> np.ndarray:
    """Crop an isolated name segment exactly as association would find it in a stream."""
    length = segment.shape[1]
    if length > CROP_COLUMNS:
        raise ValueError(f"segment of {length} columns does not fit a {CROP_COLUMNS}-column window")
    track = np.zeros((N_BANDS, CROP_COLUMNS), dtype=np.float32)
    half = CROP_COLUMNS // 2
    start = half - length // 2
    track[:, start:start + length] = segment
    return crop_at(track, half)


class AudioIndex:
    """Column energies and high-energy runs of one stream, computed once."""

    def __init__(self, stream: ObservedStream, threshold: float = ENERGY_THRESHOLD):
        self.stream = stream
        self.energy = np.sqrt((stream.audio.astype(np.float64) ** 2).sum(axis=0))
        above = np.concatenate([[False], self.energy > threshold, [False]]).astype(np.int8)
        edges = np.diff(above)
        self.run_start = np.flatnonzero(edges == 1)
        self.run_end = np.flatnonzero(edges == -1)
        csum = np.concatenate([[0.0], np.cumsum(self.energy)])
        self.run_energy = csum[self.run_end] - csum[self.run_start]
        runs = stream.visible_runs()
        self._vis_start = [s for s, _ in runs]
        self._vis = runs
        self._candidates = {}

    def av_candidates(self, online: bool, gap: int):
        """Anchors with both a positive and a negative association (memoised)."""
        key = (online, gap)
        if key not in self._candidates:
            self._candidates[key] = _av_candidates(self, online, gap)
        return self._candidates[key]

    def visible_run(self, frame: int):
        i = bisect.bisect_right(self._vis_start, frame) - 1
        if i >= 0 and self._vis[i][0] <= frame < self._vis[i][1]:
            return self._vis[i]
        return None

    def associate(self, frame: int, causal: bool = False) -> AudioCrop | None:
        """Highest-energy run within +-2 s of ``frame``.

        Candidates must overlap the frame's visible run (the gaze segment it
        belongs to) when the frame is not blank. In causal mode the run and
        its whole crop must already lie at or before ``frame``.
        """
        n = len(self.stream)
        if not 0 <= frame < n:
            raise IndexError(f"frame {frame} outside stream of length {n}")
        lo = max(frame - SEARCH_FRAMES, 0)
        hi = frame if causal else min(frame + SEARCH_FRAMES, n - 1)
        first = int(np.searchsorted(self.run_end, lo, "right"))
        gate = self.visible_run(frame)
        best = None
        for r in range(first, len(self.run_start)):
            s, e = int(self.run_start[r]), int(self.run_end[r])
            if s > hi:
                break
            if gate is not None and (e <= gate[0] or s >= gate[1]):
                continue
            centre = s + (e - s) // 2
            if causal and centre + CROP_COLUMNS // 2 > frame + 1:
                continue
            if best is None or self.run_energy[r] > self.run_energy[best[0]]:
                best = (r, s, e, centre)
        if best is None:
            return None
        _, s, e, centre = best
        return AudioCrop(crop_at(self.stream.audio, centre), (s, e), centre)


def _av_candidates(index, online, g):
    stream = index.stream
    n = len(stream)
    vis = ~stream.blank
    anchors, pos_c, neg_c = [], [], []
    offsets = (-g,) if online else (-g, g)
    for a in np.flatnonzero(vis).tolist():
        pos = index.associate(a, causal=online)
        if pos is None:
            continue
        negs = []
        for off in offsets:
            b = a + off
            if 0 <= b < n and vis[b]:
                crop = index.associate(b)
                if crop is not None:
                    negs.append(crop.centre)
        if negs:
            anchors.append(a)
            pos_c.append(pos.centre)
            neg_c.append(negs)
    return anchors, pos_c, neg_c


def associate_audio(stream: ObservedStream, frame_idx: int, causal: bool = False) -> AudioCrop | None:
    """Spectrogram crop associated with a frame, or ``None`` when nothing is heard nearby."""
    return AudioIndex(stream).associate(frame_idx, causal)


@dataclass(frozen=True)
class PairSample:
    anchor: int
    partner: int
    partner_modality: str
    z: int

    @property
    def anchor_modality(self) -> str:
        return "image"


@dataclass
class PairBatch:
    """Pairs for one modality combination.

    ``partner`` is a frame index for image partners and the crop centre
    column for audio partners (materialise with :func:`crop_at`).
    """

    anchor: np.ndarray
    partner: np.ndarray
    z: np.ndarray
    partner_modality: str
    seed: int
    online: bool

    def __len__(self):
        return len(self.anchor)

    def __iter__(self):
        for a, p, z in zip(self.anchor.tolist(), self.partner.tolist(), self.z.tolist()):
            yield PairSample(a, p, self.partner_modality, z)

    def __eq__(self, other):
        return (
            isinstance(other, PairBatch)
            and self.partner_modality == other.partner_modality
            and self.seed == other.seed
            and self.online == other.online
            and np.array_equal(self.anchor, other.anchor)
            and np.array_equal(self.partner, other.partner)
            and np.array_equal(self.z, other.z)
        )

    def audio_crops(self, audio: np.ndarray, idx=None) -> np.ndarray:
        if self.partner_modality != "audio":
            raise ValueError("batch has image partners")
        cols = self.partner if idx is None else self.partner[idx]
        return np.stack([crop_at(audio, int(c)) for c in cols]) if len(cols) else np.zeros((0, 64, 64), np.float32)

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for s in self:
                partner = f"audio@{s.partner}" if s.partner_modality == "audio" else s.partner
                fh.write(json.dumps({"anchor": s.anchor, "partner": partner, "z": s.z,
                                     "modalities": ["image", s.partner_modality]}, sort_keys=True) + "\n")


def _split_counts(count: int) -> tuple[int, int]:
    if count < 1:
        raise ValueError("count must be positive")
    n_neg = count // 2
    return count - n_neg, n_neg


def _interleave(anchors_pos, partners_pos, anchors_neg, partners_neg):
    n_pos, n_neg = len(anchors_pos), len(anchors_neg)
    order = np.empty(n_pos + n_neg, dtype=np.int64)
    anchor = np.empty_like(order)
    partner = np.empty_like(order)
    z = np.zeros_like(order)
    # pos, neg, pos, neg, ... then any leftover positive
    pos_slots = np.concatenate([np.arange(0, 2 * n_neg, 2), np.arange(2 * n_neg, n_pos + n_neg)])
    neg_slots = np.arange(1, 2 * n_neg, 2)
    anchor[pos_slots], partner[pos_slots] = anchors_pos, partners_pos
    anchor[neg_slots], partner[neg_slots], z[neg_slots] = anchors_neg, partners_neg, 1
    return anchor, partner, z


def sample_visual_pairs(stream: ObservedStream, count: int, seed: int, online: bool = True,
                        f: TimeCueFunction = TimeCueFunction()) -> PairBatch:
    """Image/image pairs: consecutive frames fire together, frames ``gap`` apart do not.

    Online mode only looks back. Otherwise partners are drawn before or
    after the anchor with equal probability among the valid directions.
    Anchors whose partners would be blank are never drawn.
    """
    n = len(stream)
    if n <= f.gap:
        raise ValueError(f"stream of {n} frames is not longer than the negative gap {f.gap}")
    vis = ~stream.blank
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x71])
    n_pos, n_neg = _split_counts(count)
    w, g = f.window, f.gap
    idx = np.arange(n)

    def ok(offset):
        j = idx + offset
        inside = (j >= 0) & (j < n)
        res = np.zeros(n, dtype=bool)
        res[inside] = vis[j[inside]]
        return res & vis

    back_pos, back_neg = ok(-w), ok(-g)
    if online:
        valid = back_pos & back_neg
        anchors = np.flatnonzero(valid)
        if anchors.size == 0:
            raise ValueError("no valid anchors in stream")
        picks = anchors[rng.integers(anchors.size, size=max(n_pos, n_neg))]
        return PairBatch(*_interleave(picks[:n_pos], picks[:n_pos] - w, picks[:n_neg], picks[:n_neg] - g),
                         "image", seed, online)

    fwd_pos, fwd_neg = ok(w), ok(g)
    valid = (back_pos | fwd_pos) & (back_neg | fwd_neg)
    anchors = np.flatnonzero(valid)
    if anchors.size == 0:
        raise ValueError("no valid anchors in stream")
    picks = anchors[rng.integers(anchors.size, size=max(n_pos, n_neg))]
    coin_p = rng.random(picks.size) < 0.5
    coin_n = rng.random(picks.size) < 0.5
    sign_p = np.where((coin_p & back_pos[picks]) | ~fwd_pos[picks], -1, 1)
    sign_n = np.where((coin_n & back_neg[picks]) | ~fwd_neg[picks], -1, 1)
    return PairBatch(*_interleave(picks[:n_pos], picks[:n_pos] + sign_p[:n_pos] * w,
                                  picks[:n_neg], picks[:n_neg] + sign_n[:n_neg] * g),
                     "image", seed, online)


def sample_av_pairs(stream: ObservedStream, count: int, seed: int, online: bool = True,
                    f: TimeCueFunction = TimeCueFunction(), index: AudioIndex | None = None) -> PairBatch:
    """Image/audio pairs: a frame with the name heard around it (z=0) and with
    the name heard around the frame ``gap`` away (z=1)."""
    n = len(stream)
    if n <= f.gap:
        raise ValueError(f"stream of {n} frames is not longer than the negative gap {f.gap}")
    index = index if index is not None else AudioIndex(stream)
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0xA7])
    n_pos, n_neg = _split_counts(count)
    anchors, pos_c, neg_c = index.av_candidates(online, f.gap)
    if not anchors:
        raise ValueError("no valid audiovisual anchors in stream")
    picks = rng.integers(len(anchors), size=max(n_pos, n_neg))
    a_arr = np.asarray(anchors)[picks]
    p_arr = np.asarray(pos_c)[picks]
    choice = rng.integers(2, size=picks.size)
    n_arr = np.array([neg_c[i][c % len(neg_c[i])] for i, c in zip(picks.tolist(), choice.tolist())])
    return PairBatch(*_interleave(a_arr[:n_pos], p_arr[:n_pos], a_arr[:n_neg], n_arr[:n_neg]),
                     "audio", seed, online)
