"""Checkpoint directories: ``model.json`` plus one STUMT1 blob per array.

Layout::

    model.json                        configs, seed, step, config hash, optimizer hyperparameters
    encoder.image.layers.0.weight.stumt
    ...
    optim.encoder.m.<parameter>.stumt Adam first moments (likewise ``v``)

Saving is deterministic: the same model and optimizer state always produce
the same bytes, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..numerics import OptimizerState, blob
from .config import DecoderConfig, EncoderConfig
from .network import STUMModel

FORMAT = "stum-checkpoint/1"
MANIFEST = "model.json"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: STUMModel
    optimizers: dict = field(default_factory=dict)  # role -> OptimizerState
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def step(self) -> int:
        return sum(s.step for s in self.optimizers.values())


def _blob_name(key: str) -> str:
    if "/" in key or key.startswith("."):
        raise CheckpointError(f"illegal array name {key!r}")
    return key + ".stumt"


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_checkpoint(path, ckpt: Checkpoint) -> Path:
    """Write ``ckpt`` to directory ``path``, replacing an earlier checkpoint there."""
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not (path / MANIFEST).exists():
        raise CheckpointError(f"{path} exists and is not a checkpoint directory")
    tmp = path.with_name(path.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)

    model = ckpt.model
    arrays = {}
    for key, arr in model.state_dict().items():
        arrays[key] = arr
    optim = {}
    for role in sorted(ckpt.optimizers):
        state: OptimizerState = ckpt.optimizers[role]
        optim[role] = {**state.hyperparameters(), "parameters": sorted(state.m)}
        for name in sorted(state.m):
            arrays[f"optim.{role}.m.{name}"] = state.m[name]
            arrays[f"optim.{role}.v.{name}"] = state.v[name]

    manifest = {
        "format": FORMAT,
        "seed": model.seed,
        "step": ckpt.step,
        "config_hash": ckpt.config_hash,
        "feature_dim": model.feature_dim,
        "encoders": {m: c.to_dict() for m, c in sorted(model.encoder_configs.items())},
        "decoders": {m: c.to_dict() for m, c in sorted(model.decoder_configs.items())},
        "arrays": sorted(arrays),
        "optimizers": optim,
        "meta": ckpt.meta,
    }
    for key, arr in arrays.items():
        blob.save(tmp / _blob_name(key), arr)
    _write_json(tmp / MANIFEST, manifest)

    if path.exists():
        shutil.rmtree(path)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CheckpointError(f"{path} has no {MANIFEST}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")

    encoders = {m: EncoderConfig.from_dict(d) for m, d in manifest["encoders"].items()}
    decoders = {m: DecoderConfig.from_dict(d) for m, d in manifest["decoders"].items()}
    model = STUMModel(encoders, manifest["seed"], decoders or None)

    arrays = {}
    for key in manifest["arrays"]:
        file = path / _blob_name(key)
        if not file.exists():
            raise CheckpointError(f"checkpoint is missing array {key!r}")
        arrays[key] = blob.load(file)

    state = {k: v for k, v in arrays.items() if not k.startswith("optim.")}
    expected = set(model.state_dict())
    if set(state) != expected:
        missing, extra = sorted(expected - set(state)), sorted(set(state) - expected)
        raise CheckpointError(f"array mismatch: missing {missing}, unexpected {extra}")
    model.load_state_dict(state)

    optimizers = {}
    for role, info in manifest["optimizers"].items():
        st = OptimizerState(lr=info["lr"], beta1=info["beta1"], beta2=info["beta2"], eps=info["eps"],
                            step=info["step"])
        for name in info["parameters"]:
            st.m[name] = np.array(arrays[f"optim.{role}.m.{name}"])
            st.v[name] = np.array(arrays[f"optim.{role}.v.{name}"])
        optimizers[role] = st
    return Checkpoint(model, optimizers, manifest["config_hash"], manifest.get("meta", {}))
