import re
from collections import defaultdict

import numpy as np
import pytest

from quakeloc.preprocess import apply_filters
from quakeloc.records import load_manifest
from quakeloc.synth import SynthConfig, synth_generate


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """40 events, 4 stations, 40 s records; shared read-only by many tests."""
    out = tmp_path_factory.mktemp("small")
    config = SynthConfig(n_events=40, n_stations=4, duration_s=40.0)
    synth_generate(config, seed=3, out_dir=out)
    return load_manifest(out / "manifest.jsonl")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_samples(small_dataset):
    samples, _ = apply_filters(small_dataset, 15)
    return samples


# --- acceptance verdicts --------------------------------------------------------------
# Tests named test_criterion_NN_* record a "detail" property; the terminal summary
# prints one PASS/FAIL line per criterion number, failing if any of its tests failed.

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_verdicts: dict[int, list[tuple[bool, str]]] = defaultdict(list)


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        details = [str(v) for k, v in report.user_properties if k == "detail"]
        _verdicts[int(match.group(1))].append((report.outcome == "passed", "; ".join(details)))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        results = _verdicts[number]
        ok = all(passed for passed, _ in results)
        detail = " | ".join(d for _, d in results if d)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
