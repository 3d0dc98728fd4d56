"""Shared fixtures and the acceptance-criteria summary printed after the run."""

import json
import time

import pytest

from stum import pipeline
from stum.config import preset

CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")
    config.stash[CRITERIA_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    item.config.stash[CRITERIA_KEY][number] = (title, status, details)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(CRITERIA_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status, details = results[number]
        line = f"{status} criterion {number:>2}: {title}"
        terminalreporter.write_line(line + (f" [{details}]" if details else ""))


@pytest.fixture
def detail(request):
    """Attach a human-readable measurement to the criterion summary line."""
    return lambda text: request.node.user_properties.append(("detail", text))


class DeskRuns:
    """Full desk pipelines (synth, train, eval), each run at most once per session."""

    def __init__(self, root):
        self.root = root
        self._runs = {}

    def get(self, name: str, mode: str = "joint", epochs: int | None = None, protocols=None) -> dict:
        if name not in self._runs:
            cfg = preset("desk")
            cfg.train.mode = mode
            if epochs is not None:
                cfg.train.epochs = epochs
            if protocols is not None:
                cfg.eval.protocols = list(protocols)
            cfg.validate()
            out = self.root / name
            t0 = time.perf_counter()
            pipeline.synth(cfg, out / "dataset")
            pipeline.train(cfg, out / "dataset", out / "checkpoint")
            t_train = time.perf_counter() - t0
            report = pipeline.evaluate(cfg, out / "dataset", out / "checkpoint", out / "report.json")
            self._runs[name] = {
                "dir": out,
                "report": report,
                "report_json": json.loads((out / "report.json").read_text()),
                "losses": (out / "checkpoint" / "losses.csv").read_text(),
                "train_seconds": t_train,
                "seconds": time.perf_counter() - t0,
            }
        return self._runs[name]


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    return DeskRuns(tmp_path_factory.mktemp("desk"))
