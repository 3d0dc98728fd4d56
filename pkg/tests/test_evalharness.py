import warnings

import numpy as np
import pytest

from stum.evalharness import (
    GraderConfig,
    GraderRefused,
    build_pair_evalset,
    cluster_metrics,
    export_embeddings,
    pair_threshold_accuracy,
    state_match_rate,
    threshold_accuracy,
    train_grader,
)
from stum.streamsim import ANGLES, make_categories, render_view


class LookupModel:
    """Stub model: items are row indices into a fixed embedding table per modality."""

    feature_dim = 3

    def __init__(self, tables, scale=1.0):
        self.tables, self.scale = tables, scale

    def encode(self, items, modality):
        return self.tables[modality][np.asarray(items, dtype=int).ravel()] * self.scale

    def roundtrip(self, items, in_modality, out_modality):
        return np.asarray(items)


def clustered(labels, spread, rng):
    centres = np.eye(3)[: labels.max() + 1] * 5
    return centres[labels] + rng.normal(0, spread, (len(labels), 3))


# -- halfway threshold ---------------------------------------------------------------

def test_threshold_accuracy_basic_and_degenerate():
    r = threshold_accuracy([0.1, 0.2, 0.9, 1.0], [True, True, False, False])
    assert r["threshold"] == pytest.approx(0.55) and r["accuracy"] == 1.0 and r["pairs"] == 4
    flat = threshold_accuracy([0.7] * 6, [True, False, True, False, False, False])
    assert flat["threshold"] == 0.7 and flat["accuracy"] == pytest.approx(4 / 6)  # d < theta never holds
    with pytest.raises(ValueError, match="empty"):
        threshold_accuracy([], [])


def test_evalset_shape_and_balance():
    labels = np.repeat(np.arange(3), 4)
    ev = build_pair_evalset(np.arange(12), labels, np.arange(6), np.repeat(np.arange(3), 2),
                            ("visual", "audiovisual"), rounds=2, seed=1)
    for proto, g in ev.groups.items():
        assert len(g) == 2 * 2 * 12 and g.same.sum() == 24
        b_labels = labels if proto == "visual" else np.repeat(np.arange(3), 2)
        np.testing.assert_array_equal(labels[g.a] == b_labels[g.b], g.same)
    vis = ev.groups["visual"]
    assert not (vis.a[vis.same] == vis.b[vis.same]).any()  # never paired with itself
    again = build_pair_evalset(np.arange(12), labels, np.arange(6), np.repeat(np.arange(3), 2),
                               ("visual", "audiovisual"), rounds=2, seed=1)
    np.testing.assert_array_equal(again.groups["visual"].b, vis.b)


def test_evalset_errors():
    with pytest.raises(ValueError, match="unknown"):
        build_pair_evalset(np.arange(4), [0, 0, 1, 1], protocols=("tactile",))
    with pytest.raises(ValueError, match="audio items"):
        build_pair_evalset(np.arange(4), [0, 0, 1, 1], protocols=("audiovisual",))
    with pytest.raises(ValueError, match="two categories"):
        build_pair_evalset(np.arange(4), [0, 0, 0, 0])
    with pytest.raises(ValueError, match="too few"):
        build_pair_evalset(np.arange(3), [0, 0, 1])


def test_pair_accuracy_scale_equivariant():
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(3), 10)
    tables = {"image": clustered(labels, 1.2, rng), "audio": clustered(labels, 1.2, rng)}
    ev = build_pair_evalset(np.arange(30), labels, np.arange(30), labels, ("visual", "audiovisual"), seed=2)
    base = pair_threshold_accuracy(ev, LookupModel(tables))
    scaled = pair_threshold_accuracy(ev, LookupModel(tables, scale=7.5))
    assert scaled["threshold"] == pytest.approx(7.5 * base["threshold"])
    for p in base["protocols"]:
        assert scaled["protocols"][p]["accuracy"] == base["protocols"][p]["accuracy"]
    assert 0.5 < base["accuracy"] < 1.0  # overlapping clusters: the test is not vacuous


def test_pair_accuracy_shared_vs_per_protocol():
    labels = np.repeat(np.arange(2), 5)
    tables = {"image": np.eye(3)[labels] * 1.0, "audio": np.eye(3)[labels] * 1.0 + 10.0}
    ev = build_pair_evalset(np.arange(10), labels, np.arange(10), labels, ("visual", "audiovisual"), seed=0)
    model = LookupModel(tables)
    per = pair_threshold_accuracy(ev, model, shared=False)
    shared = pair_threshold_accuracy(ev, model)
    assert per["protocols"]["visual"]["accuracy"] == 1.0
    assert per["protocols"]["audiovisual"]["accuracy"] == 1.0
    # audio sits far away, so one pooled threshold calls every visual pair "same"
    assert shared["protocols"]["visual"]["accuracy"] == 0.5


# -- cluster metrics ------------------------------------------------------------------

def test_cluster_metrics_point_clusters():
    x = np.array([[0, 0], [0, 0], [3, 4], [3, 4]], float)
    m = cluster_metrics(x, [0, 0, 1, 1])
    assert m["ratio"] == 0.0 and m["nearest_centroid_purity"] == 1.0
    assert m["inter_mean"] == pytest.approx(5.0) and m["items"] == 4 and m["categories"] == 2


def test_cluster_metrics_identical_embeddings():
    with pytest.warns(UserWarning, match="undefined"):
        m = cluster_metrics(np.ones((12, 4)), np.repeat(np.arange(3), 4))
    assert np.isnan(m["ratio"]) and m["nearest_centroid_purity"] == pytest.approx(1 / 3)


def test_cluster_metrics_singletons_and_errors():
    with pytest.warns(UserWarning, match=r"\[1, 2\]"):
        m = cluster_metrics(np.array([[0.0], [0.1], [5.0], [9.0]]), [0, 0, 1, 2])
    assert m["intra_mean"] == pytest.approx(0.1)
    with pytest.raises(ValueError):
        cluster_metrics(np.zeros((3, 2)), [0, 0, 0])


def test_cluster_metrics_against_loops_and_shuffled_baseline():
    rng = np.random.default_rng(4)
    labels = np.repeat(np.arange(5), 8)
    x = clustered(np.minimum(labels, 2), 0.5, rng) + rng.normal(0, 0.2, (40, 3))
    m = cluster_metrics(x, labels)
    intra, inter = [], []
    for i in range(40):
        for j in range(40):
            if i != j:
                (intra if labels[i] == labels[j] else inter).append(np.linalg.norm(x[i] - x[j]))
    assert m["intra_mean"] == pytest.approx(np.mean(intra), rel=1e-12)
    assert m["inter_mean"] == pytest.approx(np.mean(inter), rel=1e-12)
    ratios = [cluster_metrics(x, rng.permutation(labels))["ratio"] for _ in range(10)]
    assert abs(np.mean(ratios) - 1.0) <= 0.05


# -- export --------------------------------------------------------------------------

def test_export_header_only_and_deterministic(tmp_path):
    model = LookupModel({"image": np.arange(12.0).reshape(4, 3) / 7, "audio": np.ones((2, 3))})
    export_embeddings(model, [], tmp_path / "empty.csv")
    assert (tmp_path / "empty.csv").read_text() == "item_id,modality,label,f0,f1,f2\n"
    items = [("v0", "image", 0, 0), ("a1", "audio", 1, 1), ("v3", "image", 2, 3)]
    export_embeddings(model, items, tmp_path / "a.csv")
    export_embeddings(model, items, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[2] == "a1,audio,1,1.0,1.0,1.0"
    assert float(rows[3].split(",")[3]) == 9 / 7
    with pytest.raises(OSError):
        export_embeddings(model, items, tmp_path / "missing" / "x.csv")


# -- graders and state matching --------------------------------------------------------

class FixedGrader:
    def __init__(self, k, answer=None):
        self.k, self.answer = k, answer

    def predict(self, x):
        x = np.asarray(x)
        return x.copy() if self.answer is None else np.full(len(x), self.answer)


def test_state_match_rate_counts_and_errors():
    graders = {"image": FixedGrader(3), "audio": FixedGrader(3)}
    labels = np.array([0, 1, 2, 2])
    items = np.array([0, 1, 2, 0])  # the stub roundtrip returns items, graded as themselves
    assert state_match_rate(LookupModel({}), graders, items, labels, "image", "audio") == 0.75
    with pytest.raises(ValueError, match="do not match"):
        state_match_rate(LookupModel({}), {"image": FixedGrader(3), "audio": FixedGrader(4)},
                         items, labels, "image", "audio")


@pytest.fixture(scope="module")
def view_data():
    cats = make_categories(0, 4)
    rng = np.random.default_rng(0)
    angles = rng.permutation(ANGLES)
    tr, te = angles[:24], angles[24:32]
    mk = lambda ang: (np.stack([render_view(c, int(a)) for c in cats for a in ang]),  # noqa: E731
                      np.repeat(np.arange(4), len(ang)))
    return mk(tr), mk(te)


def test_grader_learns_views(view_data):
    (tx, ty), (hx, hy) = view_data
    g = train_grader("image", tx, ty, hx, hy, seed=0, cfg=GraderConfig(epochs=15))
    assert g.k == 4 and g.holdout_accuracy >= 0.9
    assert g.predict(hx[0]).shape == (1,)


def test_grader_refuses_and_rejects_single_category(view_data):
    (tx, ty), (hx, hy) = view_data
    with pytest.raises(GraderRefused):
        train_grader("image", tx, ty, hx, (hy + 1) % 4, seed=0, cfg=GraderConfig(epochs=3))
    g = train_grader("image", tx, ty, hx, (hy + 1) % 4, seed=0, cfg=GraderConfig(epochs=3), enforce=False)
    assert g.holdout_accuracy < 0.5
    with pytest.raises(ValueError, match="single category"):
        train_grader("image", tx, np.zeros_like(ty), hx, hy, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert g.accuracy(hx, (hy + 1) % 4) == g.holdout_accuracy
