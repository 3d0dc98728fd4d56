"""One JSON run configuration with strict keys, presets and a stable hash."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .model.training import TrainConfig
from .streamsim.stream import StreamConfig


class ConfigError(ValueError):
    pass


@dataclass
class DatasetBlock:
    k: int = 10
    image_size: int = 32
    n_fixations: int = 200
    dataset_seed: int = 0
    stream_seed: int = 1
    n_test_views: int = 16
    n_variants: int = 50
    n_test_variants: int = 10
    fixation_frames: list = field(default_factory=lambda: [90, 120])
    saccade_frames: list = field(default_factory=lambda: [6, 12])
    exclusion_frames: int = 400
    image_dir: str | None = None  # ingest PNG rings instead of rendering

    def stream_config(self) -> StreamConfig:
        return StreamConfig(k=self.k, image_size=self.image_size, n_fixations=self.n_fixations,
                            fixation_frames=tuple(self.fixation_frames), saccade_frames=tuple(self.saccade_frames),
                            exclusion_frames=self.exclusion_frames, n_test_views=self.n_test_views,
                            n_variants=self.n_variants, n_test_variants=self.n_test_variants,
                            dataset_seed=self.dataset_seed)


@dataclass
class ModelBlock:
    preset: str = "desk"
    feature_dim: int = 64
    sphere_radius: float | None = 0.5
    decoder_hidden: int = 256
    margin: float = 1.0
    loss: str = "contrastive_squared"


@dataclass
class TrainBlock:
    mode: str = "joint"
    epochs: int = 16
    image_pairs_per_epoch: int = 12000
    av_pairs_per_epoch: int = 12000
    batch_pairs: int = 100
    lr: float = 1e-3
    online: bool = True
    window: int = 1
    gap: int = 300
    decoders: bool = True
    decoder_epochs: int = 8
    decoder_frames_per_window: int = 24
    decoder_batch: int = 128
    decoder_lr: float = 1e-3


@dataclass
class EvalBlock:
    protocols: list = field(default_factory=lambda: ["pairs", "clusters", "graders", "state_match"])
    pair_rounds: int = 2
    shared_threshold: bool = True
    min_pair_accuracy: float = 0.95
    grader_refuse_below: float = 0.95
    min_grader_accuracy: float = 0.98
    grader_epochs: int = 30
    min_state_match: float = 0.90
    max_cluster_ratio: float = 0.5


_BLOCKS = {"dataset": DatasetBlock, "model": ModelBlock, "train": TrainBlock, "eval": EvalBlock}
EVAL_PROTOCOLS = ("pairs", "clusters", "graders", "state_match")


@dataclass
class RunConfig:
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    eval: EvalBlock = field(default_factory=EvalBlock)
    seed: int = 0

    def validate(self) -> RunConfig:
        if self.model.preset not in ("desk", "paper-scale"):
            raise ConfigError(f"unknown model preset {self.model.preset!r}")
        bad = set(self.eval.protocols) - set(EVAL_PROTOCOLS)
        if bad:
            raise ConfigError(f"unknown eval protocols {sorted(bad)}")
        if "state_match" in self.eval.protocols and "graders" not in self.eval.protocols:
            raise ConfigError("state_match needs the graders protocol")
        try:
            self.dataset.stream_config()
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(mode=t.mode, epochs=t.epochs, image_pairs_per_epoch=t.image_pairs_per_epoch,
                           av_pairs_per_epoch=t.av_pairs_per_epoch, batch_pairs=t.batch_pairs, lr=t.lr,
                           margin=self.model.margin, loss=self.model.loss, online=t.online, window=t.window,
                           gap=t.gap, decoders=t.decoders, decoder_epochs=t.decoder_epochs,
                           decoder_frames_per_window=t.decoder_frames_per_window, decoder_batch=t.decoder_batch,
                           decoder_lr=t.decoder_lr)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _merge_block(cls, current, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return dataclasses.replace(current, **values)


def apply_overrides(cfg: RunConfig, data: dict) -> RunConfig:
    unknown = sorted(set(data) - set(_BLOCKS) - {"seed", "preset"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    if "preset" in data:
        cfg = preset(data["preset"])
    for name, cls in _BLOCKS.items():
        if name in data:
            setattr(cfg, name, _merge_block(cls, getattr(cfg, name), data[name], name))
    if "seed" in data:
        cfg.seed = int(data["seed"])
    return cfg.validate()


def preset(name: str) -> RunConfig:
    """``desk`` (K=10, 32x32, 64-d) or ``paper-scale`` (K=100, 128x128, 1024-d)."""
    if name == "desk":
        return RunConfig()
    if name == "paper-scale":
        return RunConfig(
            dataset=DatasetBlock(k=100, image_size=128, n_fixations=2000),
            model=ModelBlock(preset="paper-scale", feature_dim=1024, decoder_hidden=1024),
            train=TrainBlock(image_pairs_per_epoch=56000, av_pairs_per_epoch=56000),
        )
    raise ConfigError(f"unknown preset {name!r} (expected 'desk' or 'paper-scale')")


def load_config(path=None, preset_name: str | None = None) -> RunConfig:
    cfg = preset(preset_name or "desk")
    if path is None:
        return cfg.validate()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if preset_name and "preset" in data and data["preset"] != preset_name:
        raise ConfigError(f"config preset {data['preset']!r} conflicts with --preset {preset_name!r}")
    return apply_overrides(cfg, data)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
