"""Encoder/decoder architecture descriptions and presets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import LayerSpec, build_network, dense, down, lrelu, norm, sphere
from ..numerics.layers import conv

MODALITIES = ("image", "audio")
AUDIO_SHAPE = (1, 64, 64)


def _check_modality(modality: str):
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")


@dataclass
class EncoderConfig:
    modality: str
    layers: list
    input_shape: tuple
    feature_dim: int

    def __post_init__(self):
        _check_modality(self.modality)
        self.input_shape = tuple(self.input_shape)
        self.layers = [LayerSpec.from_dict(s) if isinstance(s, dict) else s for s in self.layers]

    def build(self, rng: np.random.Generator):
        built = build_network(self.layers, self.input_shape, rng)
        if built.output_shape != (self.feature_dim,):
            raise ValueError(f"{self.modality} encoder yields {built.output_shape}, expected ({self.feature_dim},)")
        return built.net

    @property
    def n_conv(self) -> int:
        return sum(s.kind in ("conv2d", "downsample") for s in self.layers)

    def to_dict(self) -> dict:
        return {"modality": self.modality, "input_shape": list(self.input_shape),
                "feature_dim": self.feature_dim, "layers": [s.to_dict() for s in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> EncoderConfig:
        return cls(d["modality"], d["layers"], tuple(d["input_shape"]), int(d["feature_dim"]))


@dataclass
class DecoderConfig:
    modality: str
    layers: list
    feature_dim: int
    output_shape: tuple = field(default=())

    def __post_init__(self):
        _check_modality(self.modality)
        self.output_shape = tuple(self.output_shape)
        self.layers = [LayerSpec.from_dict(s) if isinstance(s, dict) else s for s in self.layers]

    def build(self, rng: np.random.Generator):
        return build_network(self.layers, (self.feature_dim,), rng, output_shape=self.output_shape).net

    def to_dict(self) -> dict:
        return {"modality": self.modality, "feature_dim": self.feature_dim,
                "output_shape": list(self.output_shape), "layers": [s.to_dict() for s in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> DecoderConfig:
        return cls(d["modality"], d["layers"], int(d["feature_dim"]), tuple(d["output_shape"]))


def _conv_stack(widths, feature_dim, final_kernel, radius):
    layers = []
    for w in widths:
        layers += [down(w), norm(), lrelu()]
    layers.append(conv(feature_dim, kernel=final_kernel))
    if radius:
        layers.append(sphere(radius))
    return layers


def image_encoder(image_size: int = 32, feature_dim: int = 64, preset: str = "desk",
                  radius: float | None = 0.5) -> EncoderConfig:
    """Desk: 4 convolutions. Paper scale: 7 convolutions on 128x128 into 1024 dims."""
    widths = (16, 32, 64) if preset == "desk" else (32, 64, 128, 256, 256, 512)
    final = image_size // 2 ** len(widths)
    if final < 1 or image_size % 2 ** len(widths):
        raise ValueError(f"image size {image_size} incompatible with {len(widths)} downsampling stages")
    return EncoderConfig("image", _conv_stack(widths, feature_dim, final, radius), (3, image_size, image_size), feature_dim)


def audio_encoder(feature_dim: int = 64, preset: str = "desk", radius: float | None = 0.5) -> EncoderConfig:
    """Desk: 4 convolutions. Paper scale: 6 convolutions into 1024 dims."""
    widths = (8, 16, 32) if preset == "desk" else (32, 64, 128, 256, 512)
    final = AUDIO_SHAPE[1] // 2 ** len(widths)
    return EncoderConfig("audio", _conv_stack(widths, feature_dim, final, radius), AUDIO_SHAPE, feature_dim)


def decoder(modality: str, output_shape, feature_dim: int = 64, hidden: int = 256) -> DecoderConfig:
    out = int(np.prod(output_shape))
    return DecoderConfig(modality, [dense(hidden), norm(), lrelu(), dense(out)], feature_dim, tuple(output_shape))


def encoder_presets(preset: str, image_size: int, feature_dim: int, radius: float | None = 0.5) -> dict:
    """Both encoders; ``radius`` projects embeddings onto a sphere (None leaves them unnormalised)."""
    if preset not in ("desk", "paper-scale"):
        raise ValueError(f"unknown model preset {preset!r}")
    return {
        "image": image_encoder(image_size, feature_dim, preset, radius),
        "audio": audio_encoder(feature_dim, preset, radius),
    }


def decoder_presets(image_size: int, feature_dim: int, hidden: int = 256) -> dict:
    return {
        "image": decoder("image", (3, image_size, image_size), feature_dim, hidden),
        "audio": decoder("audio", AUDIO_SHAPE, feature_dim, hidden),
    }
