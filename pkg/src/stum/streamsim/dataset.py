"""Dataset directories and the image-directory adapter.

A dataset directory holds ``manifest.json`` and STUMT1 blobs:

``views.stumt``        f4 [V, 3, S, S]  every rendered (or ingested) view
``view_meta.stumt``    i4 [V, 2]        (category, angle) per view
``frames.stumt``       i4 [T]           view index shown at each frame, -1 for blank
``audio.stumt``        f4 [64, T]       spectrogram channel, one column per frame
``labels.stumt``       i4 [T]           hidden category per frame, -1 for blank
``variants.stumt``     f4 [N, 64, 64]   every name variant as an isolated audio item
``variant_meta.stumt`` i4 [N, 2]        (category, variant id) per item

Frames are stored as indices into the view bank rather than as pixels; a
desk stream is ~23k frames and would otherwise take ~280 MB.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..numerics import blob
from ..timecue import audio_item
from .categories import ANGLES, synth_spectrogram
from .splits import CategorySplit, ViewRing
from .stream import (
    Fixation,
    MultimodalStream,
    ObservedStream,
    Placement,
    StreamConfig,
    World,
    build_world,
    generate_stream,
)

FORMAT = "stum-dataset/1"
MIN_RING_VIEWS = 8


class DatasetError(ValueError):
    pass


# -- image directories --------------------------------------------------------

@dataclass
class ImageRing:
    """An ingested, angle-ordered view ring of one category."""

    category_id: int
    name: str
    angles: tuple
    images: np.ndarray  # [N, 3, S, S] in [0, 1]
    files: tuple


def _read_png(path: Path, size: int) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"missing image file: {path}")
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (size, size):
                img = img.resize((size, size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetError(f"unreadable image file: {path} ({exc})") from None
    return arr.transpose(2, 0, 1)


def ingest_image_directory(path, manifest: dict | None = None, image_size: int = 32) -> list[ImageRing]:
    """Read angle-ordered PNG rings listed in ``manifest`` (default: ``path/manifest.json``).

    The manifest holds ``{"categories": [{"name": ..., "files": [...],
    "angles": [...]?}, ...]}``. Angles default to an even spread over 360
    degrees. Images are converted to RGB and resized to ``image_size``.
    """
    root = Path(path)
    if manifest is None:
        mpath = root / "manifest.json"
        if not mpath.is_file():
            raise DatasetError(f"no manifest.json in {root}")
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    entries = manifest.get("categories")
    if not entries:
        raise DatasetError("manifest lists no categories")
    rings = []
    for cid, entry in enumerate(entries):
        files = list(entry["files"])
        name = entry.get("name", f"category-{cid}")
        if len(files) < MIN_RING_VIEWS:
            raise DatasetError(f"ring {name!r} has {len(files)} views; at least {MIN_RING_VIEWS} are needed")
        angles = entry.get("angles")
        if angles is None:
            angles = [int(round(360 * i / len(files))) % 360 for i in range(len(files))]
        if len(angles) != len(files) or len(set(angles)) != len(angles):
            raise DatasetError(f"ring {name!r}: angles must be distinct and one per file")
        images = np.stack([_read_png(root / f, image_size) for f in files])
        rings.append(ImageRing(cid, name, tuple(int(a) for a in angles), images, tuple(files)))
    return rings


def export_image_directory(path, rings: list[ImageRing]) -> Path:
    """Write rings as 8-bit PNGs plus a manifest that ``ingest_image_directory`` reads back."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for ring in rings:
        files = []
        for angle, img in zip(ring.angles, ring.images):
            name = f"cat{ring.category_id:03d}_{angle:03d}.png"
            pixels = np.clip(np.rint(np.asarray(img).transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
            Image.fromarray(pixels, "RGB").save(root / name)
            files.append(name)
        entries.append({"name": ring.name, "files": files, "angles": list(ring.angles)})
    (root / "manifest.json").write_text(json.dumps({"categories": entries}, indent=2) + "\n", encoding="utf-8")
    return root


def world_rings(world: World) -> list[ImageRing]:
    """The world's full view rings in the ingestion format."""
    out = []
    for c in range(world.config.k):
        idx = np.flatnonzero(world.view_category == c)
        out.append(ImageRing(c, f"category-{c}", tuple(int(a) for a in world.view_angle[idx]),
                             world.views[idx], ()))
    return out


# -- datasets -----------------------------------------------------------------

@dataclass
class Dataset:
    """A training stream plus the labelled view bank and name variants it was cut from."""

    config: StreamConfig
    stream_seed: int
    views: np.ndarray
    view_category: np.ndarray
    view_angle: np.ndarray
    splits: list
    stream: MultimodalStream
    variant_items: np.ndarray
    variant_category: np.ndarray
    variant_id: np.ndarray
    source: str = "synthetic"

    @property
    def k(self) -> int:
        return self.config.k

    def observed(self) -> ObservedStream:
        """The label-free stream handed to training code."""
        return self.stream.observed()

    def view_indices(self, role: str) -> np.ndarray:
        if role not in ("train", "test"):
            raise ValueError(f"role must be 'train' or 'test', got {role!r}")
        keep = []
        for c, split in enumerate(self.splits):
            ring = split.train_ring if role == "train" else split.test_ring
            angles = set(ring.angles)
            keep += [i for i in np.flatnonzero(self.view_category == c) if int(self.view_angle[i]) in angles]
        return np.asarray(sorted(keep), dtype=np.int64)

    def variant_indices(self, role: str) -> np.ndarray:
        if role not in ("train", "test"):
            raise ValueError(f"role must be 'train' or 'test', got {role!r}")
        keep = []
        for c, split in enumerate(self.splits):
            ids = set(split.train_variants if role == "train" else split.test_variants)
            keep += [i for i in np.flatnonzero(self.variant_category == c) if int(self.variant_id[i]) in ids]
        return np.asarray(sorted(keep), dtype=np.int64)

    def labeled_views(self, role: str):
        idx = self.view_indices(role)
        return self.views[idx], self.view_category[idx].astype(np.int64)

    def labeled_audio(self, role: str):
        idx = self.variant_indices(role)
        return self.variant_items[idx], self.variant_category[idx].astype(np.int64)

    def summary(self) -> dict:
        s = self.stream
        return {
            "categories": self.k,
            "fixations": len(s.fixations),
            "frames": len(s),
            "blank_frames": int(s.blank.sum()),
            "views": len(self.views),
            "test_views": len(self.view_indices("test")),
            "variants": len(self.variant_items),
            "test_variants": len(self.variant_indices("test")),
        }


def synthesize_dataset(config: StreamConfig, stream_seed: int, rings: list[ImageRing] | None = None) -> Dataset:
    world = build_world(config, rings=rings)
    stream = generate_stream(config, stream_seed, world)
    items, vcat, vid = [], [], []
    for c, spec in enumerate(world.categories):
        for v in range(config.n_variants):
            items.append(audio_item(synth_spectrogram(spec, v)))
            vcat.append(c)
            vid.append(v)
    return Dataset(config, stream_seed, world.views, world.view_category, world.view_angle, world.splits,
                   stream, np.stack(items).astype(np.float32), np.asarray(vcat, np.int32),
                   np.asarray(vid, np.int32), "synthetic" if rings is None else "ingested")


def _split_to_dict(split: CategorySplit) -> dict:
    return {"train_angles": list(split.train_ring.angles), "test_angles": list(split.test_ring.angles),
            "train_variants": list(split.train_variants), "test_variants": list(split.test_variants)}


def _split_from_dict(c: int, d: dict) -> CategorySplit:
    return CategorySplit(ViewRing(c, tuple(d["train_angles"]), "train"), ViewRing(c, tuple(d["test_angles"]), "test"),
                         tuple(d["train_variants"]), tuple(d["test_variants"]))


def save_dataset(ds: Dataset, path, extra: dict | None = None) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    s = ds.stream
    blob.save(root / "views.stumt", ds.views)
    blob.save(root / "view_meta.stumt", np.stack([ds.view_category, ds.view_angle], axis=1), "i4")
    blob.save(root / "frames.stumt", s.frame_view, "i4")
    blob.save(root / "audio.stumt", s.audio)
    blob.save(root / "labels.stumt", s.labels, "i4")
    blob.save(root / "variants.stumt", ds.variant_items)
    blob.save(root / "variant_meta.stumt", np.stack([ds.variant_category, ds.variant_id], axis=1), "i4")
    manifest = {
        "format": FORMAT,
        "source": ds.source,
        "config": asdict(ds.config),
        "stream_seed": ds.stream_seed,
        "frame_rate": s.frame_rate,
        "splits": [_split_to_dict(sp) for sp in ds.splits],
        "fixations": [[f.start, f.length, f.category, f.ring_start, f.direction] for f in s.fixations],
        "placements": [[p.start, p.length, p.category, p.variant, p.fixation] for p in s.placements],
        "summary": ds.summary(),
        **(extra or {}),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return root


def load_dataset(path) -> Dataset:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise DatasetError(f"{root} is not a dataset directory (no manifest.json)")
    m = json.loads(mpath.read_text(encoding="utf-8"))
    if m.get("format") != FORMAT:
        raise DatasetError(f"unsupported dataset format {m.get('format')!r}")
    try:
        views = blob.load(root / "views.stumt")
        vmeta = blob.load(root / "view_meta.stumt")
        frames = blob.load(root / "frames.stumt")
        audio = blob.load(root / "audio.stumt")
        labels = blob.load(root / "labels.stumt")
        items = blob.load(root / "variants.stumt")
        imeta = blob.load(root / "variant_meta.stumt")
    except FileNotFoundError as exc:
        raise DatasetError(f"dataset is missing {Path(exc.filename).name}") from None
    if not (len(frames) == audio.shape[1] == len(labels)):
        raise DatasetError("frames, audio columns and labels disagree in length")
    config = StreamConfig(**m["config"])
    stream = MultimodalStream(
        views=views, frame_view=frames, audio=audio, frame_rate=m["frame_rate"], labels=labels,
        fixations=[Fixation(*f) for f in m["fixations"]], placements=[Placement(*p) for p in m["placements"]],
    )
    splits = [_split_from_dict(c, d) for c, d in enumerate(m["splits"])]
    return Dataset(config, m["stream_seed"], views, vmeta[:, 0].copy(), vmeta[:, 1].copy(), splits, stream,
                   items, imeta[:, 0].copy(), imeta[:, 1].copy(), m["source"])


__all__ = ["ANGLES", "Dataset", "DatasetError", "ImageRing", "export_image_directory", "ingest_image_directory",
           "load_dataset", "save_dataset", "synthesize_dataset", "world_rings"]
