"""Procedural stand-ins for object captures and spoken names.

Each category is a deterministic function of ``(dataset_seed, category_id)``:
an asymmetric striped star that rotates (and orbits) with the view angle,
and a set of formant-like band trajectories for its name.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np

N_BANDS = 64
FRAME_PERIOD_S = 1.0 / 30.0
MIN_NAME_S, MAX_NAME_S = 0.5, 1.7
NOISE_FLOOR = 1e-3  # column L2 energy of the silent background
ANGLES = tuple(range(0, 360, 5))

# A small shared palette keeps colour alone from identifying a category.
_PALETTE_HUES = (0.0, 0.08, 0.15, 0.33, 0.5, 0.6, 0.75, 0.9)


@dataclass(frozen=True)
class BandTrajectory:
    start_band: float
    end_band: float
    onset: float
    offset: float
    amplitude: float


@dataclass(frozen=True)
class CategorySpec:
    category_id: int
    dataset_seed: int
    radii: tuple
    vertex_angles: tuple
    orbit: float
    orbit_phase: float
    colors: tuple
    stripe_freq: float
    stripe_angle: float
    name_duration: float
    name_signature: tuple

    @property
    def hue(self) -> tuple:
        return self.colors[0]


def _rng(*keys) -> np.random.Generator:
    return np.random.default_rng([int(k) & 0xFFFFFFFF for k in keys])


def make_category(dataset_seed: int, category_id: int) -> CategorySpec:
    rng = _rng(dataset_seed, category_id, 0xC0)
    n_vertices = int(rng.integers(5, 9))
    base = np.linspace(0, 2 * np.pi, n_vertices, endpoint=False)
    vertex_angles = np.sort((base + rng.uniform(-0.3, 0.3, n_vertices) * (2 * np.pi / n_vertices)) % (2 * np.pi))
    radii = rng.uniform(0.25, 1.0, n_vertices)
    radii[int(rng.integers(n_vertices))] = 1.0  # one long arm breaks symmetry
    hues = rng.choice(len(_PALETTE_HUES), size=2, replace=False)
    colors = tuple(
        tuple(float(c) for c in colorsys.hsv_to_rgb(_PALETTE_HUES[h], rng.uniform(0.55, 0.9), rng.uniform(0.6, 0.95)))
        for h in hues
    )
    n_traj = int(rng.integers(2, 5))
    traj = [
        # the carrier spans the whole name so every column of a segment is voiced
        BandTrajectory(float(rng.uniform(4, 14)), float(rng.uniform(4, 14)), 0.0, 1.0, float(rng.uniform(0.5, 0.8)))
    ]
    for _ in range(n_traj - 1):
        onset = float(rng.uniform(0.0, 0.5))
        traj.append(BandTrajectory(
            float(rng.uniform(14, 60)), float(rng.uniform(14, 60)),
            onset, float(min(1.0, onset + rng.uniform(0.3, 0.7))), float(rng.uniform(0.6, 1.2)),
        ))
    return CategorySpec(
        category_id=category_id,
        dataset_seed=dataset_seed,
        radii=tuple(float(r) for r in radii),
        vertex_angles=tuple(float(a) for a in vertex_angles),
        orbit=float(rng.uniform(0.08, 0.2)),
        orbit_phase=float(rng.uniform(0, 2 * np.pi)),
        colors=colors,
        stripe_freq=float(rng.uniform(1.5, 4.0)),
        stripe_angle=float(rng.uniform(0, np.pi)),
        name_duration=float(rng.uniform(0.7, 1.5)),
        name_signature=tuple(traj),
    )


def make_categories(dataset_seed: int, k: int) -> list[CategorySpec]:
    return [make_category(dataset_seed, c) for c in range(k)]


def render_view(spec: CategorySpec, angle_deg: int, size: int = 32) -> np.ndarray:
    """Render ``spec`` rotated by ``angle_deg`` as a float32 [3, size, size] image in [0, 1]."""
    if int(angle_deg) != angle_deg or int(angle_deg) % 5 != 0 or not 0 <= angle_deg < 360:
        raise ValueError(f"view angle must be a multiple of 5 in [0, 355], got {angle_deg}")
    theta = np.deg2rad(angle_deg)
    ss = 2  # supersampling factor
    n = size * ss
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    # object centre orbits the image centre as the object turns
    cx = spec.orbit * np.cos(spec.orbit_phase + theta)
    cy = spec.orbit * np.sin(spec.orbit_phase + theta)
    dx, dy = xx - cx, yy - cy
    c, s = np.cos(-theta), np.sin(-theta)
    u, v = c * dx - s * dy, s * dx + c * dy  # object-frame coordinates
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u) % (2 * np.pi)

    scale = 0.62
    va = np.asarray(spec.vertex_angles)
    vr = np.asarray(spec.radii) * scale
    ang = np.concatenate([va - 2 * np.pi, va, va + 2 * np.pi])
    rad = np.concatenate([vr, vr, vr])
    edge = np.interp(phi, ang, rad)
    pixel = 2.0 / n
    cover = np.clip((edge - rho) / pixel + 0.5, 0.0, 1.0)

    stripe_dir = u * np.cos(spec.stripe_angle) + v * np.sin(spec.stripe_angle)
    mix = 0.5 + 0.5 * np.tanh(4.0 * np.sin(spec.stripe_freq * np.pi * stripe_dir))
    c1, c2 = (np.asarray(col)[:, None, None] for col in spec.colors)
    fg = c1 * mix + c2 * (1.0 - mix)
    img = fg * cover + 0.05 * (1.0 - cover)
    img = img.reshape(3, size, ss, size, ss).mean(axis=(2, 4))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_ring(spec: CategorySpec, size: int = 32) -> np.ndarray:
    """All 72 views of one category, [72, 3, size, size], ordered by angle."""
    return np.stack([render_view(spec, a, size) for a in ANGLES])


def name_length(duration_s: float) -> int:
    return int(np.clip(round(duration_s / FRAME_PERIOD_S), round(MIN_NAME_S / FRAME_PERIOD_S),
                       round(MAX_NAME_S / FRAME_PERIOD_S)))


def synth_spectrogram(spec: CategorySpec, variant_seed: int) -> np.ndarray:
    """One spoken-name variant as a non-negative [64, L] log-mel-like segment.

    Variants jitter duration, amplitude (+-20%) and band placement (+-1 band)
    around the category's signature.
    """
    rng = _rng(spec.dataset_seed, spec.category_id, variant_seed, 0xA0)
    duration = float(np.clip(spec.name_duration + rng.uniform(-0.25, 0.25), MIN_NAME_S, MAX_NAME_S))
    length = name_length(duration)
    gain = rng.uniform(0.8, 1.2)
    t = (np.arange(length) + 0.5) / length
    bands = np.arange(N_BANDS)[:, None]
    seg = np.zeros((N_BANDS, length))
    for i, tr in enumerate(spec.name_signature):
        shift = float(rng.integers(-1, 2))
        centre = tr.start_band + (tr.end_band - tr.start_band) * t + shift
        span = max(tr.offset - tr.onset, 1e-6)
        local = np.clip((t - tr.onset) / span, 0.0, 1.0)
        active = (t >= tr.onset) & (t <= tr.offset)
        if i == 0:
            env = 0.6 + 0.4 * np.sin(np.pi * local)
        else:
            env = np.sin(np.pi * local) * active
        amp = tr.amplitude * rng.uniform(0.9, 1.1)
        seg += amp * env[None, :] * np.exp(-0.5 * ((bands - centre[None, :]) / 1.3) ** 2)
    return np.clip(seg * gain, 0.0, None).astype(np.float32)
