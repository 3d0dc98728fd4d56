"""Encoder training from time-cue pairs and decoder training from window representatives."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..numerics import Adam, OptimizerState, Tensor
from ..numerics.functional import mse_loss
from ..streamsim.stream import ObservedStream
from ..timecue import AudioIndex, TimeCueFunction, crop_at, sample_av_pairs, sample_visual_pairs
from .losses import batch_loss, select_representative_index
from .network import STUMModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    mode: str = "joint"  # "visual" or "joint"
    epochs: int = 12
    image_pairs_per_epoch: int = 4000
    av_pairs_per_epoch: int = 4000
    batch_pairs: int = 100
    lr: float = 1e-3
    margin: float = 1.0
    loss: str = "contrastive"
    online: bool = True
    window: int = 1
    gap: int = 300
    decoders: bool = True
    decoder_epochs: int = 8
    decoder_frames_per_window: int = 24
    decoder_batch: int = 128
    decoder_lr: float = 1e-3

    def __post_init__(self):
        if self.mode not in ("visual", "joint"):
            raise ValueError(f"mode must be 'visual' or 'joint', got {self.mode!r}")
        if self.loss not in ("contrastive", "contrastive_squared", "alignment"):
            raise ValueError(f"unknown loss variant {self.loss!r}")
        if self.epochs < 0 or self.batch_pairs < 1:
            raise ValueError("epochs must be >= 0 and batch_pairs >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class TrainingDiverged(RuntimeError):
    """Raised on a non-finite loss; ``state`` holds a diagnostic dump."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


def _diagnostics(model: STUMModel, epoch: int, step: int, loss: float) -> dict:
    return {
        "epoch": epoch,
        "step": step,
        "loss": loss,
        "parameter_norms": {n: float(np.linalg.norm(p.data)) for n, p in model.named_parameters("encoder")},
        "nonfinite_parameters": [n for n, p in model.named_parameters() if not np.isfinite(p.data).all()],
    }


def encoder_optimizer(model: STUMModel, mode: str, lr: float, state: OptimizerState | None = None) -> Adam:
    mods = ("image",) if mode == "visual" else ("image", "audio")
    named = [(n, p) for m in mods for n, p in model.named_parameters("encoder", m)]
    return Adam(named, state=state, lr=lr)


def train_encoders(model: STUMModel, streams, cfg: TrainConfig, seed: int,
                   optimizer: Adam | None = None) -> tuple[list[dict], Adam]:
    """Minimise the summed pair loss over time-cue pairs.

    Each epoch draws fresh pair batches from every stream. In joint mode one
    image/image minibatch and one image/audio minibatch form each step.
    Returns the per-epoch mean loss per pair and the optimizer.
    """
    streams = [streams] if isinstance(streams, ObservedStream) else list(streams)
    f = TimeCueFunction(cfg.window, cfg.gap)
    for s in streams:
        if len(s) <= f.gap:
            raise ValueError(f"stream of {len(s)} frames is not longer than the negative gap {f.gap}")
    opt = optimizer if optimizer is not None else encoder_optimizer(model, cfg.mode, cfg.lr)
    joint = cfg.mode == "joint"
    indices = [AudioIndex(s) for s in streams] if joint else [None] * len(streams)
    img_net = model.encoders["image"]
    aud_net = model.encoders.get("audio")
    history = []
    step = 0

    for epoch in range(cfg.epochs):
        img_net.train()
        if joint:
            aud_net.train()
        totals = {"image": 0.0, "av": 0.0}
        counts = {"image": 0, "av": 0}
        for si, (stream, index) in enumerate(zip(streams, indices)):
            bseed = int(np.random.SeedSequence([seed, epoch, si]).generate_state(1)[0])
            share = len(streams)
            vis = sample_visual_pairs(stream, max(2, cfg.image_pairs_per_epoch // share), bseed, cfg.online, f)
            av = sample_av_pairs(stream, max(2, cfg.av_pairs_per_epoch // share), bseed, cfg.online, f,
                                 index=index) if joint else None
            rng = np.random.default_rng([seed, epoch, si, 0x5F])
            vis_order = rng.permutation(len(vis))
            av_order = rng.permutation(len(av)) if joint else None
            n_steps = int(np.ceil(len(vis) / cfg.batch_pairs))
            if joint:
                n_steps = max(n_steps, int(np.ceil(len(av) / cfg.batch_pairs)))
            crop_cache: dict = {}
            for b in range(n_steps):
                opt.zero_grad()
                loss_terms = []
                sel = vis_order[b * cfg.batch_pairs:(b + 1) * cfg.batch_pairs]
                if len(sel):
                    frames = np.concatenate([vis.anchor[sel], vis.partner[sel]])
                    feats = model.encode_tensor(stream.images(frames), "image")
                    k = len(sel)
                    li = batch_loss(feats[:k], feats[k:], vis.z[sel], cfg.margin, cfg.loss)
                    loss_terms.append(li)
                    totals["image"] += float(li.data)
                    counts["image"] += k
                if joint:
                    sel = av_order[b * cfg.batch_pairs:(b + 1) * cfg.batch_pairs]
                    if len(sel):
                        fi = model.encode_tensor(stream.images(av.anchor[sel]), "image")
                        crops = np.stack([_cached_crop(crop_cache, stream.audio, int(c)) for c in av.partner[sel]])
                        fa = model.encode_tensor(crops[:, None], "audio")
                        la = batch_loss(fi, fa, av.z[sel], cfg.margin, cfg.loss)
                        loss_terms.append(la)
                        totals["av"] += float(la.data)
                        counts["av"] += len(sel)
                loss = loss_terms[0]
                for t in loss_terms[1:]:
                    loss = loss + t
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch} step {step}",
                                           _diagnostics(model, epoch, step, value))
                loss.backward()
                opt.step()
                step += 1
        entry = {"epoch": epoch, "image_loss": totals["image"] / max(counts["image"], 1)}
        if joint:
            entry["av_loss"] = totals["av"] / max(counts["av"], 1)
        entry["loss"] = (totals["image"] + totals["av"]) / max(counts["image"] + counts["av"], 1)
        history.append(entry)
        log.info("epoch %d loss %.4f", epoch, entry["loss"])

    img_net.eval()
    if aud_net is not None:
        aud_net.eval()
    return history, opt


def _cached_crop(cache: dict, audio: np.ndarray, centre: int) -> np.ndarray:
    if centre not in cache:
        cache[centre] = crop_at(audio, centre)
    return cache[centre]


@dataclass
class DecoderTrainingSet:
    features: np.ndarray  # [N, D] in-window features of either modality
    image_target: np.ndarray  # [N] frame index of the window's representative image
    audio_target: np.ndarray  # [N] crop centre of the window's representative audio, -1 if none
    n_windows: int


def decoder_training_set(model: STUMModel, stream: ObservedStream, cfg: TrainConfig, seed: int) -> DecoderTrainingSet:
    """Select one representative image and audio crop per gaze window.

    Windows are the visible runs between blank frames. The representative
    of each modality is the window member whose feature is closest to that
    modality's mean window feature.
    """
    index = AudioIndex(stream)
    runs = stream.visible_runs()
    all_frames = np.flatnonzero(~stream.blank)
    all_feats = model.encode(stream.images(all_frames), "image")
    pos = {int(f): i for i, f in enumerate(all_frames)}
    use_audio_inputs = cfg.mode == "joint" and "audio" in model.encoders
    rng = np.random.default_rng([seed, 0xDEC])

    feats, img_t, aud_t = [], [], []
    for s, e in runs:
        frames = np.arange(s, e)
        wf = all_feats[[pos[int(x)] for x in frames]]
        rep_img = int(frames[select_representative_index(wf)])

        centres = sorted({c.centre for c in (index.associate(int(x)) for x in frames) if c is not None})
        rep_aud = -1
        aud_feats = None
        if centres:
            crops = np.stack([crop_at(stream.audio, c) for c in centres])
            aud_feats = model.encode(crops[:, None], "audio") if "audio" in model.encoders else None
            rep_aud = centres[select_representative_index(aud_feats)] if aud_feats is not None else centres[0]

        take = min(cfg.decoder_frames_per_window, len(frames))
        chosen = np.sort(rng.choice(len(frames), size=take, replace=False))
        feats.append(wf[chosen])
        img_t += [rep_img] * take
        aud_t += [rep_aud] * take
        if use_audio_inputs and aud_feats is not None:
            # cycle the few audio features so both modalities weigh equally per window
            cycled = aud_feats[np.arange(take) % len(aud_feats)]
            feats.append(cycled)
            img_t += [rep_img] * take
            aud_t += [rep_aud] * take

    return DecoderTrainingSet(np.concatenate(feats).astype(np.float32), np.asarray(img_t),
                              np.asarray(aud_t), len(runs))


def train_decoders(model: STUMModel, stream: ObservedStream, cfg: TrainConfig, seed: int,
                   optimizer: Adam | None = None) -> tuple[list[dict], Adam]:
    """Fit the output decoders with MSE against window representatives.

    Encoders are only read; their parameters and statistics are untouched.
    """
    if not model.decoders:
        raise ValueError("model has no decoders to train")
    data = decoder_training_set(model, stream, cfg, seed)
    named = [(n, p) for n, p in model.named_parameters("decoder")]
    opt = optimizer if optimizer is not None else Adam(named, lr=cfg.decoder_lr)
    rng = np.random.default_rng([seed, 0xDE])
    history = []
    crop_cache: dict = {}
    has_audio = data.audio_target >= 0
    for epoch in range(cfg.decoder_epochs):
        for net in model.decoders.values():
            net.train()
        order = rng.permutation(len(data.features))
        sums = {m: 0.0 for m in model.decoders}
        batches = {m: 0 for m in model.decoders}
        for b in range(0, len(order), cfg.decoder_batch):
            sel = order[b:b + cfg.decoder_batch]
            opt.zero_grad()
            terms = []
            if "image" in model.decoders and len(sel) > 1:
                out = model.decoders["image"](Tensor(data.features[sel]))
                li = mse_loss(out, stream.images(data.image_target[sel]))
                terms.append(li)
                sums["image"] += float(li.data)
                batches["image"] += 1
            asel = sel[has_audio[sel]]
            if "audio" in model.decoders and len(asel) > 1:
                out = model.decoders["audio"](Tensor(data.features[asel]))
                target = np.stack([_cached_crop(crop_cache, stream.audio, int(c)) for c in data.audio_target[asel]])
                la = mse_loss(out, target[:, None])
                terms.append(la)
                sums["audio"] += float(la.data)
                batches["audio"] += 1
            if not terms:
                continue
            loss = terms[0]
            for t in terms[1:]:
                loss = loss + t
            if not np.isfinite(float(loss.data)):
                raise TrainingDiverged("non-finite decoder loss", {"epoch": epoch, "loss": float(loss.data)})
            loss.backward()
            opt.step()
        history.append({"epoch": epoch, **{f"{m}_mse": sums[m] / max(batches[m], 1) for m in sums}})
    for net in model.decoders.values():
        net.eval()
    return history, opt
