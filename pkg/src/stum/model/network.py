"""Two modality encoders into one shared space, plus optional output decoders."""

from __future__ import annotations

import numpy as np

from ..numerics import Tensor, no_grad
from .config import MODALITIES, DecoderConfig, EncoderConfig

_INIT_STREAMS = {("encoder", "image"): 11, ("encoder", "audio"): 12,
                 ("decoder", "image"): 21, ("decoder", "audio"): 22}


class MissingDecoderError(RuntimeError):
    pass


class STUMModel:
    """Image and audio encoders mapping into one feature space.

    Each network is initialised from its own seed stream, so removing one
    modality never changes another's parameters.
    """

    def __init__(self, encoder_configs: dict, seed: int = 0, decoder_configs: dict | None = None):
        self.seed = int(seed)
        self.encoder_configs = dict(encoder_configs)
        dims = {c.feature_dim for c in self.encoder_configs.values()}
        if len(dims) != 1:
            raise ValueError(f"encoders disagree on the shared feature dimension: {dims}")
        self.feature_dim = dims.pop()
        self.encoders = {m: cfg.build(self._rng("encoder", m)) for m, cfg in self.encoder_configs.items()}
        for net in self.encoders.values():
            net.eval()
        self.decoder_configs: dict = {}
        self.decoders: dict = {}
        if decoder_configs:
            self.init_decoders(decoder_configs)

    def _rng(self, role, modality):
        return np.random.default_rng([self.seed & 0xFFFFFFFF, _INIT_STREAMS[(role, modality)]])

    def init_decoders(self, decoder_configs: dict):
        for m, cfg in decoder_configs.items():
            if cfg.feature_dim != self.feature_dim:
                raise ValueError("decoder feature_dim differs from the shared space")
            expected = tuple(self.encoder_configs[m].input_shape) if m in self.encoder_configs else None
            if expected is not None and tuple(cfg.output_shape) != expected:
                raise ValueError(f"{m} decoder outputs {cfg.output_shape}, encoder takes {expected}")
            self.decoder_configs[m] = cfg
            self.decoders[m] = cfg.build(self._rng("decoder", m))
            self.decoders[m].eval()

    # -- parameters ---------------------------------------------------------
    def named_parameters(self, role: str | None = None, modality: str | None = None):
        groups = []
        if role in (None, "encoder"):
            groups += [("encoder", m, net) for m, net in self.encoders.items()]
        if role in (None, "decoder"):
            groups += [("decoder", m, net) for m, net in self.decoders.items()]
        for r, m, net in groups:
            if modality is not None and m != modality:
                continue
            for name, p in net.named_parameters():
                yield f"{r}.{m}.{name}", p

    def state_dict(self) -> dict:
        out = {}
        for role, nets in (("encoder", self.encoders), ("decoder", self.decoders)):
            for m, net in nets.items():
                for name, arr in net.state_dict().items():
                    out[f"{role}.{m}.{name}"] = arr
        return out

    def load_state_dict(self, state: dict):
        for role, nets in (("encoder", self.encoders), ("decoder", self.decoders)):
            for m, net in nets.items():
                prefix = f"{role}.{m}."
                net.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})

    # -- inference ----------------------------------------------------------
    def prepare(self, x, modality: str) -> np.ndarray:
        if modality not in self.encoders:
            raise ValueError(f"model has no {modality} encoder")
        shape = tuple(self.encoder_configs[modality].input_shape)
        arr = np.asarray(x, dtype=np.float32)
        if arr.shape == shape[1:] and shape[0] == 1:
            arr = arr[None]
        if arr.shape == shape:
            return arr[None]
        if arr.ndim == len(shape) and shape[0] == 1 and arr.shape[1:] == shape[1:]:
            return arr[:, None]
        if arr.ndim == len(shape) + 1 and arr.shape[1:] == shape:
            return arr
        raise ValueError(f"{modality} input of shape {np.shape(x)} does not match {shape}")

    def encode_tensor(self, x: np.ndarray, modality: str) -> Tensor:
        """Differentiable encoding of an already-prepared batch (uses the network's current mode)."""
        return self.encoders[modality](Tensor(x))

    def encode(self, x, modality: str, batch_size: int = 256) -> np.ndarray:
        """Frozen-statistics embedding; a single input yields a 1-D vector."""
        if modality not in self.encoders:
            raise ValueError(f"model has no {modality} encoder")
        single = np.asarray(x).shape == tuple(self.encoder_configs[modality].input_shape) or (
            modality == "audio" and np.asarray(x).ndim == 2)
        batch = self.prepare(x, modality)
        net = self.encoders[modality]
        was_training = net.training
        net.eval()
        try:
            with no_grad():
                outs = [net(Tensor(batch[i:i + batch_size])).data for i in range(0, len(batch), batch_size)]
        finally:
            net.train(was_training)
        feats = np.concatenate(outs) if outs else np.zeros((0, self.feature_dim), np.float32)
        return feats[0] if single else feats

    def decode(self, features, modality: str, batch_size: int = 256) -> np.ndarray:
        if modality not in self.decoders:
            raise MissingDecoderError(f"checkpoint has no trained {modality} decoder")
        feats = np.asarray(features, dtype=np.float32)
        single = feats.ndim == 1
        feats = np.atleast_2d(feats)
        net = self.decoders[modality]
        net.eval()
        with no_grad():
            outs = [net(Tensor(feats[i:i + batch_size])).data for i in range(0, len(feats), batch_size)]
        out = np.concatenate(outs)
        return out[0] if single else out

    def roundtrip(self, x, in_modality: str, out_modality: str) -> np.ndarray:
        if out_modality not in self.decoders:
            raise MissingDecoderError(f"checkpoint has no trained {out_modality} decoder")
        return self.decode(self.encode(x, in_modality), out_modality)


def build_model(encoder_configs: dict, seed: int, decoder_configs: dict | None = None) -> STUMModel:
    for m in encoder_configs:
        if m not in MODALITIES:
            raise ValueError(f"unknown modality {m!r}")
    return STUMModel(encoder_configs, seed, decoder_configs)


__all__ = ["STUMModel", "MissingDecoderError", "build_model", "EncoderConfig", "DecoderConfig"]
