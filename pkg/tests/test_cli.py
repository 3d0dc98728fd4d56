import json

import numpy as np
import pytest

from stum import cli
from stum.config import ConfigError, RunConfig, load_config, preset
from stum.numerics import blob

TINY = {
    "seed": 3,
    "dataset": {"k": 6, "n_fixations": 16, "n_variants": 10, "n_test_variants": 2},
    "train": {"epochs": 1, "image_pairs_per_epoch": 200, "av_pairs_per_epoch": 200,
              "decoder_epochs": 1, "decoder_frames_per_window": 4},
    "eval": {"grader_epochs": 2, "grader_refuse_below": 0.0},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path)


# -- configuration ------------------------------------------------------------------

def test_presets_and_hash():
    desk, paper = preset("desk"), preset("paper-scale")
    assert (desk.dataset.k, desk.dataset.image_size, desk.model.feature_dim) == (10, 32, 64)
    assert (paper.dataset.k, paper.dataset.image_size, paper.model.feature_dim) == (100, 128, 1024)
    assert paper.dataset.n_test_views == 16
    assert RunConfig().hash() == RunConfig().hash() != paper.hash()
    with pytest.raises(ConfigError):
        preset("laptop")


def test_config_rejects_unknown_keys(tmp_path):
    for bad in ({"trian": {}}, {"train": {"epohcs": 3}}, {"eval": {"protocols": ["vibes"]}},
                {"train": {"mode": "smell"}}, {"eval": {"protocols": ["state_match"]}}):
        (tmp_path / "c.json").write_text(json.dumps(bad))
        with pytest.raises(ConfigError):
            load_config(tmp_path / "c.json")
    (tmp_path / "c.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")
    (tmp_path / "c.json").write_text(json.dumps({"preset": "desk"}))
    with pytest.raises(ConfigError, match="conflicts"):
        load_config(tmp_path / "c.json", "paper-scale")


def test_config_overrides(tiny_config):
    cfg = load_config(tiny_config)
    assert cfg.dataset.k == 6 and cfg.train.epochs == 1 and cfg.seed == 3
    assert cfg.model.feature_dim == 64  # untouched keys keep the preset value


# -- exit codes -----------------------------------------------------------------------

def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["synth"])  # --out missing
    assert info.value.code == 1
    assert cli.main(["synth", "--out", str(tmp_path / "x"), "--config", str(tmp_path / "nope.json")]) == 1
    assert "cannot read config" in capsys.readouterr().err


def test_bad_config_and_thread_env_exit_1(tmp_path, monkeypatch, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"model": {"depth": 9}}))
    assert cli.main(["synth", "--out", str(tmp_path / "o"), "--config", str(tmp_path / "bad.json")]) == 1
    assert "unknown key" in capsys.readouterr().err
    monkeypatch.setenv("STUM_THREADS", "many")
    assert cli.main(["synth", "--out", str(tmp_path / "o2")]) == 1
    monkeypatch.setenv("STUM_THREADS", "0")
    assert cli.main(["synth", "--out", str(tmp_path / "o3")]) == 1
    assert cli.main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "c"), "--epochs", "-1"]) == 1


def test_runtime_failure_exit_2(tmp_path, capsys):
    assert cli.main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "ckpt")]) == 2
    assert "DatasetError" in capsys.readouterr().err


def test_synth_refuses_non_empty_output(tmp_path, tiny_config):
    out = tmp_path / "data"
    out.mkdir()
    (out / "precious.txt").write_text("keep me")
    assert cli.main(["synth", "--config", tiny_config, "--out", str(out)]) == 1
    assert (out / "precious.txt").read_text() == "keep me"
    assert cli.main(["synth", "--config", tiny_config, "--out", str(out), "--force"]) == 0
    assert not (out / "precious.txt").exists() and (out / "manifest.json").exists()


# -- a tiny end-to-end run -------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(TINY))
    code = cli.main(["run", "--config", str(cfg), "--out", str(root / "run")])
    return root, code


def test_run_writes_all_artifacts(tiny_run):
    root, code = tiny_run
    assert code == 3  # one epoch cannot pass the gates
    run = root / "run"
    report = json.loads((run / "report.json").read_text())
    assert report["passed"] is False and report["mode"] == "joint"
    assert set(report["pairs"]["protocols"]) == {"visual", "audiovisual"}
    assert set(report["state_match"]) == {"image->image", "image->audio", "audio->image", "audio->audio"}
    assert report["config_hash"] == report["checkpoint_config_hash"]
    assert (run / "checkpoint" / "model.json").exists()
    lines = (run / "checkpoint" / "losses.csv").read_text().splitlines()
    assert lines[0] == "phase,epoch,image_loss,av_loss,loss,image_mse,audio_mse" and len(lines) == 3


def test_roundtrip_and_export(tiny_run, tmp_path):
    root, _ = tiny_run
    ckpt = str(root / "run" / "checkpoint")
    blob.save(tmp_path / "img.stumt", np.random.default_rng(0).random((3, 32, 32)).astype(np.float32))
    assert cli.main(["roundtrip", "--ckpt", ckpt, "--input", str(tmp_path / "img.stumt"),
                     "--in-modality", "image", "--out-modality", "audio", "--out", str(tmp_path / "o.stumt")]) == 0
    assert blob.load(tmp_path / "o.stumt").shape == (1, 64, 64)
    assert (tmp_path / "o.png").exists()
    assert cli.main(["roundtrip", "--ckpt", ckpt, "--input", str(tmp_path / "img.stumt"),
                     "--in-modality", "audio", "--out-modality", "image", "--out", str(tmp_path / "p.stumt")]) == 2
    assert cli.main(["export", "--data", str(root / "run" / "dataset"), "--ckpt", ckpt,
                     "--out", str(tmp_path / "e.csv")]) == 0
    rows = (tmp_path / "e.csv").read_text().splitlines()
    assert len(rows) == 1 + 6 * 16 + 6 * 2 and rows[0].startswith("item_id,modality,label,f0,")


def test_eval_is_reproducible(tiny_run, tmp_path, tiny_config):
    root, _ = tiny_run
    run = root / "run"
    for name in ("a.json", "b.json"):
        assert cli.main(["eval", "--config", tiny_config, "--data", str(run / "dataset"),
                         "--ckpt", str(run / "checkpoint"), "--out", str(tmp_path / name)]) == 3
    a, b = (json.loads((tmp_path / n).read_text()) for n in ("a.json", "b.json"))
    a.pop("generated_at"), b.pop("generated_at")
    assert a == b
