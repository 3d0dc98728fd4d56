"""Cluster statistics, roundtrip state matching and embedding export."""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np


def _distance_matrix(x: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Exact Euclidean distance matrix, built a block of rows at a time."""
    out = np.empty((len(x), len(x)))
    for s in range(0, len(x), chunk):
        diff = x[s:s + chunk, None, :] - x[None, :, :]
        out[s:s + chunk] = np.sqrt((diff * diff).sum(axis=2))
    return out


def cluster_metrics(embeddings, labels) -> dict:
    """Mean within/between-category distance, their ratio and nearest-centroid purity.

    Categories with a single item contribute no within-category pairs (a
    warning is issued). A zero between-category mean makes the ratio
    undefined; it is reported as NaN with a warning.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    cats = np.unique(labels)
    if len(cats) < 2:
        raise ValueError("cluster metrics need at least two categories")
    singles = [int(c) for c in cats if (labels == c).sum() < 2]
    if singles:
        warnings.warn(f"categories {singles} have one item and are excluded from the intra mean", stacklevel=2)

    d = _distance_matrix(x)
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(len(x), dtype=bool)
    intra = d[same & off]
    inter = d[~same]
    intra_mean = float(intra.mean()) if intra.size else float("nan")
    inter_mean = float(inter.mean())
    if inter_mean == 0.0 or not np.isfinite(intra_mean):
        warnings.warn("intra/inter ratio is undefined for these embeddings", stacklevel=2)
        ratio = float("nan")
    else:
        ratio = intra_mean / inter_mean

    centroids = np.stack([x[labels == c].mean(axis=0) for c in cats])
    cd = ((x[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    nearest = cats[np.argmin(cd, axis=1)]  # argmin keeps the lowest index on ties
    return {"intra_mean": intra_mean, "inter_mean": inter_mean, "ratio": ratio,
            "nearest_centroid_purity": float((nearest == labels).mean()), "items": int(len(x)),
            "categories": int(len(cats))}


def state_match_rate(model, graders: dict, items, labels, in_modality: str, out_modality: str) -> float:
    """Fraction of items whose roundtrip output is graded as the item's own category."""
    grader = graders[out_modality]
    ks = {g.k for g in graders.values()}
    labels = np.asarray(labels)
    if len(ks) != 1 or (labels.size and labels.max() >= grader.k):
        raise ValueError(f"grader category counts {sorted(ks)} do not match labels with max {labels.max()}")
    if len(labels) == 0:
        raise ValueError("no test items")
    outputs = model.roundtrip(items, in_modality, out_modality)
    return float((grader.predict(outputs) == labels).mean())


def export_embeddings(model, items, path) -> Path:
    """Write ``item_id, modality, label, f0..f{D-1}`` rows for ``(item_id, modality, label, input)`` items."""
    path = Path(path)
    items = list(items)
    feats = []
    for modality in ("image", "audio"):
        sel = [i for i, it in enumerate(items) if it[1] == modality]
        if sel:
            f = np.atleast_2d(model.encode(np.stack([items[i][3] for i in sel]), modality))
            feats += list(zip(sel, f))
    feats = dict(feats)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["item_id", "modality", "label"] + [f"f{i}" for i in range(model.feature_dim)])
            for i, (item_id, modality, label, _) in enumerate(items):
                writer.writerow([item_id, modality, label] + [repr(float(v)) for v in feats[i]])
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc
    return path
