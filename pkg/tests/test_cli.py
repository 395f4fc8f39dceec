import json
import subprocess
import sys
from pathlib import Path

import pytest

from quakeloc.cli import main


def run_ok(capsys, *argv):
    assert main(list(argv)) == 0, capsys.readouterr().err
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "run.json"}


SYNTH = ("--events", "40", "--stations", "4", "--record-seconds", "40", "--seed", "7")
MODEL = ("--domain", "frequency", "--duration", "15", "--encoder", "tcn", "--epochs", "2", "--lr", "1e-3")


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", *SYNTH, "--out", str(root / "data")]) == 0
    manifest = str(root / "data" / "manifest.jsonl")
    assert main(["train", *MODEL, "--manifest", manifest, "--out", str(root / "train")]) == 0
    return root, manifest


def test_synth_is_reproducible(pipeline, capsys, tmp_path):
    root, _ = pipeline
    out = run_ok(capsys, "synth", *SYNTH, "--out", str(tmp_path / "again"))
    assert out["records"] > 0
    assert tree_bytes(root / "data") == tree_bytes(tmp_path / "again")


def test_train_outputs_and_run_record(pipeline):
    root, _ = pipeline
    for name in ("model.json", "model.bin", "history.csv", "run.json"):
        assert (root / "train" / name).is_file()
    record = json.loads((root / "train" / "run.json").read_text())
    assert record["command"] == "train" and record["seed"] == 0
    assert record["config"]["encoder"] == "tcn" and record["config"]["lr"] == 1e-3
    assert record["version"] and record["wall_time_s"] >= 0


def test_replay_from_run_json(pipeline, capsys, tmp_path):
    root, _ = pipeline
    run_ok(capsys, "train", "--config", str(root / "train" / "run.json"), "--out", str(tmp_path / "replay"))
    assert tree_bytes(root / "train") == tree_bytes(tmp_path / "replay")


def test_flag_overrides_config_file(pipeline, capsys, tmp_path):
    root, manifest = pipeline
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"manifest": manifest, "duration": 30, "max_dist_km": 80.0}))
    run_ok(capsys, "preprocess", "--config", str(cfg), "--duration", "15", "--max-dist-km", "50",
           "--out", str(tmp_path / "pre"))
    record = json.loads((tmp_path / "pre" / "run.json").read_text())
    assert record["config"]["max_dist_km"] == 50.0 and record["config"]["duration"] == 15
    assert (tmp_path / "pre" / "samples.csv").is_file()
    assert (tmp_path / "pre" / "plots" / "hist_snr_db.csv").is_file()


def test_unknown_config_key_rejected(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"events": 3}))
    assert main(["preprocess", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "events" in json.loads(capsys.readouterr().err)["message"]


def test_eval_snr_gate_gives_subset(pipeline, capsys):
    root, manifest = pipeline
    ckpt = str(root / "train" / "model")
    run_ok(capsys, "eval", "--manifest", manifest, "--checkpoint", ckpt, "--out", str(root / "eval_all"))
    run_ok(capsys, "eval", "--manifest", manifest, "--checkpoint", ckpt, "--snr-min", "25",
           "--out", str(root / "eval_25"))
    all_rows = (root / "eval_all" / "report.csv").read_text().splitlines()[1:]
    gated = (root / "eval_25" / "report.csv").read_text().splitlines()[1:]
    assert set(gated) <= set(all_rows) and len(gated) <= len(all_rows)
    summary = json.loads((root / "eval_all" / "summary.json").read_text())
    assert {"domain", "duration_s", "encoder", "snr_policy", "mean_km", "std_km", "n"} <= set(summary[0])


def test_transfer_and_report(pipeline, capsys, tmp_path):
    root, manifest = pipeline
    regions = tmp_path / "regions.json"
    regions.write_text(json.dumps([{"name": "All", "center": [39.0, 35.0], "radius_km": 5000.0}]))
    run_ok(capsys, "transfer", "--manifest", manifest, "--checkpoint", str(root / "train" / "model"),
           "--regions", str(regions), "--region", "All", "--epochs", "1", "--out", str(tmp_path / "tr"))
    assert (tmp_path / "tr" / "model.bin").is_file()
    out = run_ok(capsys, "report", "--history", str(root / "train" / "history.csv"), "--out", str(tmp_path / "rep"))
    assert out["files"] == ["history.svg"]


def test_missing_manifest_is_single_line_error(capsys, tmp_path):
    code = main(["train", "--out", str(tmp_path)])
    err = capsys.readouterr().err.strip()
    assert code == 2 and len(err.splitlines()) == 1
    assert json.loads(err)["error"] == "CLIError"


def test_bad_flag_reported_as_json(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "quakeloc", "train", "--domain", "audio", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and "domain" in json.loads(lines[0])["message"]
