"""Library-level pipeline steps behind the command-line interface."""

from __future__ import annotations

import csv
import json
import logging
import shutil
import time
from pathlib import Path

import numpy as np
from PIL import Image

from .config import RunConfig
from .evalharness import (
    GraderConfig,
    GraderRefused,
    build_pair_evalset,
    cluster_metrics,
    export_embeddings,
    pair_threshold_accuracy,
    state_match_rate,
    train_grader,
)
from .model.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .model.config import decoder_presets, encoder_presets
from .model.network import MissingDecoderError, STUMModel
from .model.training import TrainingDiverged, train_decoders, train_encoders
from .numerics import blob
from .streamsim.dataset import Dataset, ingest_image_directory, load_dataset, save_dataset, synthesize_dataset

log = logging.getLogger(__name__)

PATHS = (("image", "image"), ("image", "audio"), ("audio", "image"), ("audio", "audio"))


class OutputExistsError(FileExistsError):
    pass


def _prepare_out_dir(path: Path, force: bool):
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        if not force:
            raise OutputExistsError(f"{path} exists and is not empty (use --force to overwrite)")
        shutil.rmtree(path) if path.is_dir() else path.unlink()
    path.mkdir(parents=True, exist_ok=True)


# -- synth ----------------------------------------------------------------------

def synth(cfg: RunConfig, out_dir, force: bool = False) -> Dataset:
    out_dir = Path(out_dir)
    _prepare_out_dir(out_dir, force)
    d = cfg.dataset
    rings = ingest_image_directory(d.image_dir, image_size=d.image_size) if d.image_dir else None
    ds = synthesize_dataset(d.stream_config(), d.stream_seed, rings)
    save_dataset(ds, out_dir, extra={"config_hash": cfg.hash()})
    return ds


# -- train ----------------------------------------------------------------------

def build_initial_model(cfg: RunConfig, image_size: int, with_decoders: bool | None = None) -> STUMModel:
    m = cfg.model
    encoders = encoder_presets(m.preset, image_size, m.feature_dim, m.sphere_radius)
    decoders = None
    if cfg.train.decoders if with_decoders is None else with_decoders:
        decoders = decoder_presets(image_size, m.feature_dim, m.decoder_hidden)
    return STUMModel(encoders, cfg.seed, decoders)


LOSS_COLUMNS = ("phase", "epoch", "image_loss", "av_loss", "loss", "image_mse", "audio_mse")


def write_loss_csv(path, encoder_history, decoder_history):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for phase, rows in (("encoder", encoder_history), ("decoder", decoder_history)):
            for row in rows:
                w.writerow([phase] + [repr(float(row[c])) if c in row and c != "epoch" else row.get(c, "")
                                      for c in LOSS_COLUMNS[1:]])


def train(cfg: RunConfig, dataset_dir, out_ckpt, force: bool = False) -> Checkpoint:
    """Encoder training, then decoder training when enabled; writes the checkpoint and ``losses.csv``."""
    out_ckpt = Path(out_ckpt)
    if out_ckpt.exists() and any(out_ckpt.iterdir()) and not force:
        raise OutputExistsError(f"{out_ckpt} exists and is not empty (use --force to overwrite)")
    ds = load_dataset(dataset_dir)
    tcfg = cfg.train_config()
    model = build_initial_model(cfg, ds.config.image_size)
    stream = ds.observed()
    meta = {"mode": tcfg.mode, "train": tcfg.to_dict(), "dataset": ds.summary()}
    enc_history, dec_history, optimizers = [], [], {}
    try:
        t0 = time.perf_counter()
        enc_history, opt = train_encoders(model, stream, tcfg, seed=cfg.seed)
        optimizers["encoder"] = opt.state
        log.info("encoder training finished in %.1fs", time.perf_counter() - t0)
        if tcfg.decoders and tcfg.epochs > 0:
            dec_history, dopt = train_decoders(model, stream, tcfg, seed=cfg.seed + 1)
            optimizers["decoder"] = dopt.state
    except TrainingDiverged as exc:
        failed = out_ckpt.with_name(out_ckpt.name + ".failed")
        save_checkpoint(failed, Checkpoint(model, optimizers, cfg.hash(),
                                           {**meta, "failure": str(exc), "diagnostics": exc.state}))
        raise
    meta.update(encoder_history=enc_history, decoder_history=dec_history,
                decoders_trained=bool(dec_history))
    ckpt = Checkpoint(model, optimizers, cfg.hash(), meta)
    save_checkpoint(out_ckpt, ckpt)
    write_loss_csv(out_ckpt / "losses.csv", enc_history, dec_history)
    return ckpt


# -- eval -----------------------------------------------------------------------

def _gate(value, threshold, op: str) -> dict:
    ok = bool(np.isfinite(value) and (value >= threshold if op == ">=" else value < threshold))
    return {"value": value, "threshold": threshold, "op": op, "passed": ok}


def evaluate(cfg: RunConfig, dataset_dir, ckpt_dir, report_path=None) -> dict:
    """Run the configured protocols against a checkpoint and return (and optionally write) the report."""
    ds = load_dataset(dataset_dir)
    ckpt = load_checkpoint(ckpt_dir)
    model = ckpt.model
    e = cfg.eval
    mode = ckpt.meta.get("mode", cfg.train.mode)
    img_x, img_y = ds.labeled_views("test")
    aud_x, aud_y = ds.labeled_audio("test")
    report = {
        "config_hash": cfg.hash(),
        "checkpoint_config_hash": ckpt.config_hash,
        "seed": cfg.seed,
        "mode": mode,
        "step": ckpt.step,
        "dataset": ds.summary(),
        "gates": {},
    }
    gates = report["gates"]

    if "pairs" in e.protocols:
        protocols = ("visual", "audiovisual") if mode == "joint" else ("visual",)
        ev = build_pair_evalset(img_x, img_y, aud_x, aud_y, protocols, rounds=e.pair_rounds, seed=cfg.seed)
        res = pair_threshold_accuracy(ev, model, shared=e.shared_threshold)
        res["per_protocol"] = pair_threshold_accuracy(ev, model, shared=False)["protocols"]
        report["pairs"] = res
        for p, r in res["protocols"].items():
            gates[f"pair_accuracy.{p}"] = _gate(r["accuracy"], e.min_pair_accuracy, ">=")

    if "clusters" in e.protocols:
        init = build_initial_model(cfg, ds.config.image_size, with_decoders=False)
        clusters = {"image": cluster_metrics(model.encode(img_x, "image"), img_y),
                    "image_init": cluster_metrics(init.encode(img_x, "image"), img_y)}
        if mode == "joint":
            feats = np.concatenate([model.encode(img_x, "image"), model.encode(aud_x, "audio")])
            clusters["mixed"] = cluster_metrics(feats, np.concatenate([img_y, aud_y]))
        report["clusters"] = clusters
        gates["cluster_ratio.image"] = _gate(clusters["image"]["ratio"], e.max_cluster_ratio, "<")

    graders = {}
    if "graders" in e.protocols:
        gcfg = GraderConfig(epochs=e.grader_epochs, min_accuracy=e.grader_refuse_below)
        report["graders"] = {}
        for modality, (tx, ty, hx, hy) in {
            "image": (*ds.labeled_views("train"), img_x, img_y),
            "audio": (*ds.labeled_audio("train"), aud_x, aud_y),
        }.items():
            try:
                graders[modality] = train_grader(modality, tx, ty, hx, hy, seed=cfg.seed, cfg=gcfg)
                acc, refused = graders[modality].holdout_accuracy, False
            except GraderRefused as exc:
                log.warning("%s", exc)
                acc, refused = float("nan"), True
            report["graders"][modality] = {"holdout_accuracy": acc, "refused": refused}
            gates[f"grader.{modality}"] = _gate(acc, e.min_grader_accuracy, ">=")

    if "state_match" in e.protocols:
        missing = [m for m in ("image", "audio") if m not in model.decoders]
        if missing:
            raise MissingDecoderError(f"state matching needs decoders; checkpoint lacks the {', '.join(missing)} decoder")
        items = {"image": (img_x, img_y), "audio": (aud_x, aud_y)}
        report["state_match"] = {}
        if len(graders) < 2:
            log.warning("graders were refused; state matching skipped")
        for src, dst in PATHS:
            key = f"{src}->{dst}"
            rate = (state_match_rate(model, graders, *items[src], src, dst) if len(graders) == 2
                    else float("nan"))
            report["state_match"][key] = rate
            gates[f"state_match.{key}"] = _gate(rate, e.min_state_match, ">=")

    report["passed"] = all(g["passed"] for g in gates.values())
    report["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    if report_path is not None:
        write_report(report, report_path)
    return report


def _jsonable(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    return x


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- roundtrip / export -----------------------------------------------------------

def save_preview(arr: np.ndarray, modality: str, path) -> Path:
    """PNG preview: RGB for images, a max-normalised grayscale heatmap for spectrograms."""
    arr = np.asarray(arr, dtype=np.float64)
    if modality == "image":
        pixels = np.clip(np.rint(arr.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
        img = Image.fromarray(pixels, "RGB")
    else:
        a = arr.reshape(arr.shape[-2:])
        peak = a.max()
        scaled = a / peak if peak > 0 else np.zeros_like(a)
        img = Image.fromarray(np.clip(np.rint(scaled[::-1] * 255.0), 0, 255).astype(np.uint8), "L")
    img.save(path)
    return Path(path)


def roundtrip(ckpt_dir, input_file, in_modality: str, out_modality: str, out_file) -> np.ndarray:
    model = load_checkpoint(ckpt_dir).model
    x = blob.load(input_file)
    out = model.roundtrip(x, in_modality, out_modality)
    out_file = Path(out_file)
    blob.save(out_file, out)
    frames = out if out.ndim == len(model.decoder_configs[out_modality].output_shape) + 1 else out[None]
    for i, frame in enumerate(frames):
        suffix = ".png" if len(frames) == 1 else f".{i}.png"
        save_preview(frame, out_modality, out_file.with_suffix(suffix))
    return out


def export(dataset_dir, ckpt_dir, out_csv) -> Path:
    ds = load_dataset(dataset_dir)
    model = load_checkpoint(ckpt_dir).model
    items = []
    for i in ds.view_indices("test"):
        items.append((f"view{int(i)}", "image", int(ds.view_category[i]), ds.views[i]))
    if "audio" in model.encoders:
        for i in ds.variant_indices("test"):
            items.append((f"variant{int(i)}", "audio", int(ds.variant_category[i]), ds.variant_items[i]))
    return export_embeddings(model, items, out_csv)
