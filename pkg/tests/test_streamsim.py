import json

import numpy as np
import pytest

from stum.streamsim import (
    ANGLES,
    BLANK,
    NOISE_FLOOR,
    StreamConfig,
    build_world,
    generate_stream,
    make_categories,
    make_category,
    render_view,
    split_views_and_variants,
    synth_spectrogram,
)
from stum.streamsim.dataset import (
    DatasetError,
    export_image_directory,
    ingest_image_directory,
    load_dataset,
    save_dataset,
    synthesize_dataset,
    world_rings,
)
from stum.timecue import ENERGY_THRESHOLD


@pytest.fixture(scope="module")
def world():
    return build_world(StreamConfig())


@pytest.fixture(scope="module")
def stream(world):
    return generate_stream(StreamConfig(n_fixations=60), 7, world)


# -- categories ------------------------------------------------------------------

def test_categories_are_distinct_and_bands_in_range():
    cats = make_categories(0, 20)
    for i, a in enumerate(cats):
        for traj in a.name_signature:
            assert 0 <= traj.start_band < 64 and 0 <= traj.end_band < 64
        for b in cats[i + 1:]:
            assert a.radii != b.radii or a.name_signature != b.name_signature
        assert 2 <= len(a.name_signature) <= 4


def test_render_view_deterministic_range_and_errors():
    spec = make_category(0, 3)
    a, b = render_view(spec, 40), render_view(spec, 40)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3, 32, 32) and a.min() >= 0 and a.max() <= 1
    assert np.linalg.norm(render_view(spec, 0) - render_view(spec, 180)) > 0
    with pytest.raises(ValueError):
        render_view(spec, 7)


def test_adjacent_views_closer_than_other_categories():
    """Mean 5-degree neighbour distance < mean cross-category distance over 200 pairs."""
    cats = make_categories(0, 10)
    rng = np.random.default_rng(0)
    adj, cross = [], []
    for _ in range(200):
        c = int(rng.integers(10))
        a = int(rng.choice(ANGLES))
        adj.append(np.linalg.norm(render_view(cats[c], a) - render_view(cats[c], (a + 5) % 360)))
        d = (c + 1 + int(rng.integers(9))) % 10
        cross.append(np.linalg.norm(render_view(cats[c], a) - render_view(cats[d], int(rng.choice(ANGLES)))))
    assert np.mean(adj) < np.mean(cross)


def test_spectrogram_variants():
    cats = make_categories(0, 10)
    s1 = synth_spectrogram(cats[0], 1)
    np.testing.assert_array_equal(s1, synth_spectrogram(cats[0], 1))
    assert s1.shape[0] == 64 and (s1 >= 0).all()
    assert s1.max() >= 5 * NOISE_FLOOR
    s2 = synth_spectrogram(cats[0], 2)
    assert s1.shape != s2.shape or np.abs(s1 - s2).max() > 0
    for c in cats:
        for v in range(50):
            assert 15 <= synth_spectrogram(c, v).shape[1] <= 52


def test_variant_profiles_correlate_within_category():
    """Band-energy profile correlation within a category beats cross-category, over 100 triples."""
    cats = make_categories(0, 10)
    rng = np.random.default_rng(1)
    prof = lambda s: s.sum(axis=1)  # noqa: E731
    within, across = [], []
    for _ in range(100):
        c = int(rng.integers(10))
        d = (c + 1 + int(rng.integers(9))) % 10
        v1, v2, v3 = rng.integers(50, size=3)
        a, b, o = prof(synth_spectrogram(cats[c], v1)), prof(synth_spectrogram(cats[c], v2)), \
            prof(synth_spectrogram(cats[d], v3))
        within.append(np.corrcoef(a, b)[0, 1])
        across.append(np.corrcoef(a, o)[0, 1])
    assert np.mean(within) > np.mean(across)
    # measured: the within-category correlation wins in 96 of these 100 triples
    assert (np.array(within) > np.array(across)).sum() >= 96


# -- splits ----------------------------------------------------------------------

def test_split_sizes_and_disjointness():
    splits = split_views_and_variants(5, 16, 10, seed=0)
    for sp in splits:
        assert len(sp.train_ring) == 56 and len(sp.test_ring) == 16
        assert set(sp.train_ring.angles).isdisjoint(sp.test_ring.angles)
        assert set(sp.train_ring.angles) | set(sp.test_ring.angles) == set(ANGLES)
        assert list(sp.train_ring.angles) == sorted(sp.train_ring.angles)
        assert sp.train_ring.successor(len(sp.train_ring) - 1) == 0
        assert len(sp.test_variants) == 10 and set(sp.train_variants).isdisjoint(sp.test_variants)
    assert len(split_views_and_variants(1, 0, 0, seed=0)[0].train_ring) == 72


def test_split_seeds_differ():
    tests = {split_views_and_variants(1, 16, 10, seed=s)[0].test_ring.angles for s in range(20)}
    assert len(tests) >= 19


def test_split_rejects_bad_counts():
    with pytest.raises(ValueError):
        split_views_and_variants(2, 72, 10, seed=0)


# -- streams ---------------------------------------------------------------------

def test_stream_structure(stream):
    fx = stream.fixations
    assert all(90 <= f.length <= 120 for f in fx)
    gaps = [b.start - a.end for a, b in zip(fx, fx[1:])]
    assert all(6 <= g <= 12 for g in gaps)
    assert len(stream) == sum(f.length for f in fx) + sum(gaps)
    assert len(stream.frame_view) == stream.audio.shape[1] == len(stream.labels)
    # blank frames carry no label, visible frames carry their fixation's category
    assert ((stream.frame_view == BLANK) == (stream.labels == BLANK)).all()
    for f in fx:
        assert (stream.labels[f.start:f.end] == f.category).all()


def test_stream_walks_train_ring(stream, world):
    for f in stream.fixations[:10]:
        ring = list(world.ring_indices(f.category, "train"))
        views = stream.frame_view[f.start:f.end]
        for a, b in zip(views, views[1:]):
            step = (ring.index(b) - ring.index(a)) % len(ring)
            assert step == (1 if f.direction == 1 else len(ring) - 1)


def test_scheduler_property(stream):
    lab = stream.labels
    a, b = lab[:-300], lab[300:]
    both = (a != BLANK) & (b != BLANK)
    assert (a[both] != b[both]).all()


def test_audio_alignment(stream):
    energy = np.sqrt((stream.audio.astype(np.float64) ** 2).sum(axis=0))
    placed = np.zeros(len(stream), bool)
    for p in stream.placements:
        placed[p.start:p.start + p.length] = True
    assert (energy[~placed] < ENERGY_THRESHOLD).all()
    for f in stream.fixations:
        above = np.flatnonzero(energy[f.start:f.end] > ENERGY_THRESHOLD)
        assert above.size and (np.diff(above) == 1).all()  # one contiguous region
        mid = f.start + (above[0] + above[-1]) / 2
        assert abs(mid - f.mid) <= 1


def test_stream_determinism():
    cfg = StreamConfig(n_fixations=40)
    a, b = generate_stream(cfg, 7), generate_stream(cfg, 7)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.audio, b.audio)


def test_world_requires_two_categories():
    with pytest.raises(ValueError):
        build_world(StreamConfig(k=1))


# -- dataset directories -----------------------------------------------------------

def test_dataset_round_trip_is_byte_identical(tmp_path):
    ds = synthesize_dataset(StreamConfig(n_fixations=12), 3)
    save_dataset(ds, tmp_path / "a")
    back = load_dataset(tmp_path / "a")
    save_dataset(back, tmp_path / "b")
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    assert back.stream.fixations == ds.stream.fixations
    x, y = back.labeled_views("test")
    assert len(x) == 160 and set(y.tolist()) == set(range(10))
    assert back.labeled_audio("test")[0].shape == (100, 64, 64)


def test_dataset_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)
    ds = synthesize_dataset(StreamConfig(n_fixations=12), 3)
    save_dataset(ds, tmp_path / "d")
    (tmp_path / "d" / "audio.stumt").unlink()
    with pytest.raises(DatasetError, match="audio.stumt"):
        load_dataset(tmp_path / "d")


@pytest.fixture(scope="module")
def two_rings():
    return world_rings(build_world(StreamConfig(k=2)))


def test_ingest_round_trip(tmp_path, two_rings):
    export_image_directory(tmp_path, two_rings)
    back = ingest_image_directory(tmp_path)
    assert len(back) == 2 and all(len(r.angles) == 72 for r in back)
    for a, b in zip(two_rings, back):
        assert a.angles == b.angles
        np.testing.assert_array_equal(b.images, np.rint(a.images * 255) / 255)


def test_ingest_missing_file(tmp_path, two_rings):
    export_image_directory(tmp_path, two_rings)
    (tmp_path / "cat001_010.png").unlink()
    with pytest.raises(DatasetError, match="cat001_010.png"):
        ingest_image_directory(tmp_path)


def test_ingest_unreadable_and_short_ring(tmp_path, two_rings):
    export_image_directory(tmp_path, two_rings)
    (tmp_path / "cat000_000.png").write_bytes(b"not a png")
    with pytest.raises(DatasetError, match="unreadable"):
        ingest_image_directory(tmp_path)
    manifest = {"categories": [{"name": "tiny", "files": ["cat001_000.png"] * 7}]}
    with pytest.raises(DatasetError, match="at least 8"):
        ingest_image_directory(tmp_path, manifest)


def test_ingest_resizes_and_feeds_a_stream(tmp_path, two_rings):
    export_image_directory(tmp_path, two_rings)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    for entry in manifest["categories"]:
        entry["files"], entry["angles"] = entry["files"][::4], entry["angles"][::4]  # 18-view rings
    rings = ingest_image_directory(tmp_path, manifest, image_size=16)
    assert rings[0].images.shape == (18, 3, 16, 16)
    cfg = StreamConfig(k=2, image_size=16, n_fixations=4, exclusion_frames=0)
    ds = synthesize_dataset(cfg, 0, rings)
    assert ds.source == "ingested" and len(ds.view_indices("test")) == 2 * 4
