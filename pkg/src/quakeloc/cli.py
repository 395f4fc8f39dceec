"""``quakeloc`` command line: synth, preprocess, train, transfer, eval and report.

Every option can also come from a JSON file given with ``--config``; keys are
the option names with dashes replaced by underscores. Explicit flags win over
file values, which win over built-in defaults. Each run writes ``run.json``
with the fully resolved options, so ``--config <out>/run.json`` replays it.
Failures print one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .evaluation import NATIONWIDE, evaluate, summary_json, read_report_csv, write_report_csv
from .models import ModelConfig, build_model
from .plotdata import emit_plot_data
from .preprocess import FilterPolicy, apply_filters
from .records import load_manifest
from .spectrogram import spectrogram3, write_spectrogram
from .synth import SynthConfig, synth_generate
from .tensor.checkpoint import load_checkpoint, save_checkpoint
from .training import (
    DEFAULT_REGIONS, SplitSpec, TRAIN_END_2017_08, TrainConfig, chronological_split, dump_regions,
    find_region, history_csv, load_regions, read_history_csv, train_phase1, train_phase2_transfer,
)

log = logging.getLogger("quakeloc")

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    # synth
    "events": 200, "stations": 8, "record_seconds": 60.0, "max_event_km": 100.0,
    "noisy_fraction": 0.0, "noise_ratio": 0.3, "amplitude_scale": 1.0,
    # data / filters
    "manifest": None, "duration": 30, "max_dist_km": 110.0, "min_magnitude": 3.5, "snr_min": None,
    "write_spectrograms": False,
    # model
    "domain": "frequency", "encoder": "resnet", "dropout": 0.5, "head_hidden": 128,
    "resnet_stem": 32, "resnet_widths": [32, 64, 128], "tcn_channels": 32, "tcn_kernel": 3,
    "tcn_dilations": [1, 2, 4, 8, 16, 32], "station_ref": [39.0, 35.0], "station_scale_deg": 5.0,
    # training
    "loss": "mse", "epochs": 100, "batch": 64, "lr": 1e-5, "lr_decay": 0.9, "lr_every": 10,
    "train_end": TRAIN_END_2017_08, "val_fraction": 0.1, "freeze": "encoder",
    # transfer / eval / report
    "checkpoint": None, "regions": None, "region": None, "report": None, "history": None,
}

COMMANDS = ("synth", "preprocess", "train", "transfer", "eval", "report")


class CLIError(Exception):
    """Bad invocation: unknown option, missing input, inconsistent config."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CLIError(message)


def _add_data(p: argparse.ArgumentParser, duration: bool = True) -> None:
    p.add_argument("--manifest", help="manifest.jsonl to read")
    if duration:
        p.add_argument("--duration", type=int, help="window length d in seconds (15, 30 or 60)")
    p.add_argument("--max-dist-km", type=float, help="drop records farther than this from the epicenter")
    p.add_argument("--min-magnitude", type=float, help="drop events below this magnitude")
    p.add_argument("--snr-min", type=float, help="keep only records with SNR (dB) at or above this")


def _add_split(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-end", type=int, help="last training origin time (unix seconds)")
    p.add_argument("--val-fraction", type=float, help="share of training events held out, latest first")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--domain", choices=("time", "frequency"))
    p.add_argument("--encoder", choices=("resnet", "tcn"))
    p.add_argument("--dropout", type=float)
    p.add_argument("--head-hidden", type=int)
    p.add_argument("--resnet-stem", type=int)
    p.add_argument("--resnet-widths", type=int, nargs="+")
    p.add_argument("--tcn-channels", type=int)
    p.add_argument("--tcn-kernel", type=int)
    p.add_argument("--tcn-dilations", type=int, nargs="+")
    p.add_argument("--station-ref", type=float, nargs=2, metavar=("LAT", "LON"))
    p.add_argument("--station-scale-deg", type=float)


def _add_train(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=("mse", "mae"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--lr-decay", type=float, help="multiplicative decay factor")
    p.add_argument("--lr-every", type=int, help="epochs between decays")
    _add_split(p)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory (created if missing)")
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("-v", "--verbose", action="store_true", default=None)

    parser = _Parser(prog="quakeloc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"quakeloc {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic record set")
    p.add_argument("--events", type=int)
    p.add_argument("--stations", type=int)
    p.add_argument("--record-seconds", type=float)
    p.add_argument("--max-event-km", type=float)
    p.add_argument("--noisy-fraction", type=float)
    p.add_argument("--noise-ratio", type=float, help="noise rms as a fraction of peak amplitude")
    p.add_argument("--amplitude-scale", type=float)

    p = sub.add_parser("preprocess", parents=[common], help="window, gate and summarise records")
    _add_data(p)
    p.add_argument("--write-spectrograms", action="store_true", default=None)

    p = sub.add_parser("train", parents=[common], help="nationwide training")
    _add_data(p)
    _add_model(p)
    _add_train(p)

    p = sub.add_parser("transfer", parents=[common], help="regional fine-tuning of a trained model")
    _add_data(p, duration=False)
    _add_train(p)
    p.add_argument("--checkpoint", help="base model checkpoint (path without suffix)")
    p.add_argument("--regions", help="JSON list of regions")
    p.add_argument("--region", help="region name to fine-tune on")
    p.add_argument("--freeze", choices=("encoder", "head"))

    p = sub.add_parser("eval", parents=[common], help="km-error report of a trained model")
    _add_data(p, duration=False)
    _add_split(p)
    p.add_argument("--checkpoint")
    p.add_argument("--regions")
    p.add_argument("--batch", type=int)

    p = sub.add_parser("report", parents=[common], help="plot data from a report and/or history")
    p.add_argument("--report", help="report.csv written by eval")
    p.add_argument("--history", help="history.csv written by train or transfer")
    _add_data(p)
    return parser


def resolve(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then config-file values, then explicit flags."""
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    resolved = {k: DEFAULTS.get(k) for k in given}
    resolved.update({k: v for k, v in DEFAULTS.items() if k in _options(args.command)})
    if args.config:
        data = json.loads(Path(args.config).read_text())
        data = data.get("config", data)  # accept a run.json directly
        allowed = _options(args.command) | {"out", "seed", "verbose"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise CLIError(f"unknown config keys for {args.command}: {unknown}")
        resolved.update(data)
    resolved.update(given)
    if not resolved.get("out"):
        raise CLIError("--out is required")
    resolved.setdefault("seed", DEFAULTS["seed"])
    resolved.setdefault("verbose", False)
    return resolved


def _options(command: str) -> set[str]:
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[command]
    return {a.dest for a in sub._actions if a.dest not in ("help", "config")}


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _require(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg.get(key) is None:
            raise CLIError(f"--{key.replace('_', '-')} is required")
        if key in ("manifest", "report", "history", "regions") and not Path(cfg[key]).exists():
            raise CLIError(f"{key} not found: {cfg[key]}")
        if key == "checkpoint" and not Path(str(cfg[key]) + ".json").exists():
            raise CLIError(f"checkpoint not found: {cfg[key]}")


def _policy(cfg: dict) -> FilterPolicy:
    return FilterPolicy(cfg["max_dist_km"], cfg["min_magnitude"], cfg["snr_min"])


def _split(cfg: dict) -> SplitSpec:
    return SplitSpec(cfg["train_end"], cfg["val_fraction"])


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(
        encoder_kind=cfg["encoder"], input_domain=cfg["domain"], d=cfg["duration"],
        dropout_rate=cfg["dropout"], head_hidden=cfg["head_hidden"], seed=cfg["seed"],
        resnet_stem=cfg["resnet_stem"], resnet_widths=tuple(cfg["resnet_widths"]),
        tcn_channels=cfg["tcn_channels"], tcn_kernel=cfg["tcn_kernel"],
        tcn_dilations=tuple(cfg["tcn_dilations"]), station_ref=tuple(cfg["station_ref"]),
        station_scale_deg=cfg["station_scale_deg"],
    )


def _train_config(cfg: dict, policy: FilterPolicy) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg["batch"], epochs=cfg["epochs"], loss=cfg["loss"], base_lr=cfg["lr"],
        decay_factor=cfg["lr_decay"], decay_every=cfg["lr_every"], seed=cfg["seed"],
        snr_policy=policy, split=_split(cfg), freeze=cfg.get("freeze", "encoder"),
    )


def _regions(cfg: dict):
    return load_regions(cfg["regions"]) if cfg.get("regions") else DEFAULT_REGIONS


def _load_model(path: str):
    state, _, header = load_checkpoint(path)
    if "model_config" not in header["meta"]:
        raise CLIError(f"checkpoint {path} carries no model_config")
    raw = dict(header["meta"]["model_config"])
    model = build_model(ModelConfig.from_dict(raw))
    model.load_state_dict(state)
    return model


def _samples(cfg: dict, d: int, policy: FilterPolicy):
    samples, report = apply_filters(load_manifest(cfg["manifest"]), d, policy)
    log.info("%d of %d records retained", report.retained, report.input)
    return samples, report


def _save_training(out: Path, result, cfg: dict, extra_meta: dict | None = None) -> dict:
    meta = {"model_config": result.model.config.to_dict(), "best_epoch": result.best_epoch,
            "seed": cfg["seed"], **(extra_meta or {})}
    best = result.best_model()
    save_checkpoint(out / "model", best.state_dict(), result.optimizer, result.best_epoch, meta)
    (out / "history.csv").write_text(history_csv(result.history))
    return {"best_epoch": result.best_epoch,
            "n_train": len(result.splits["train"]), "n_val": len(result.splits["val"]),
            "n_test": len(result.splits["test"])}


# --- subcommands -------------------------------------------------------------------


def cmd_synth(cfg: dict, out: Path) -> dict:
    config = SynthConfig(
        n_events=cfg["events"], n_stations=cfg["stations"], duration_s=cfg["record_seconds"],
        max_event_distance_km=cfg["max_event_km"], noisy_fraction=cfg["noisy_fraction"],
        noisy_noise_ratio=cfg["noise_ratio"], amplitude_scale=cfg["amplitude_scale"],
    )
    manifest = synth_generate(config, cfg["seed"], out)
    return {"records": len(manifest), "manifest": str(out / "manifest.jsonl")}


def cmd_preprocess(cfg: dict, out: Path) -> dict:
    _require(cfg, "manifest")
    samples, report = _samples(cfg, cfg["duration"], _policy(cfg))
    lines = ["record_id,event_id,station_id,t_pga_s,snr_db,epicentral_distance_km,magnitude,depth_km"]
    for s in samples:
        lines.append(",".join([s.record_id, s.event_id, s.station_id] + [
            repr(float(v)) for v in (s.t_pga_s, s.snr_db, s.epicentral_distance_km, s.magnitude, s.depth_km)]))
    (out / "samples.csv").write_text("\n".join(lines) + "\n")
    (out / "filter_report.json").write_text(json.dumps(
        {**report.to_dict(), "skipped_short": report.skipped_short}, indent=1, sort_keys=True) + "\n")
    if samples:
        emit_plot_data(out / "plots", samples=samples)
    if cfg.get("write_spectrograms"):
        for s in samples:
            write_spectrogram(out / "spectrograms" / s.record_id, spectrogram3(s.window))
    return report.to_dict()


def cmd_train(cfg: dict, out: Path) -> dict:
    _require(cfg, "manifest")
    policy = _policy(cfg)
    model_config = _model_config(cfg)
    # gate only distance/magnitude while windowing; SNR gating is the training policy
    samples, _ = _samples(cfg, model_config.d, FilterPolicy(policy.max_epicentral_km, policy.min_magnitude))
    result = train_phase1(samples, model_config, _train_config(cfg, policy))
    return _save_training(out, result, cfg)


def cmd_transfer(cfg: dict, out: Path) -> dict:
    _require(cfg, "manifest", "checkpoint", "region")
    regions = _regions(cfg)
    region = find_region(regions, cfg["region"])
    base = _load_model(cfg["checkpoint"])
    policy = _policy(cfg)
    samples, _ = _samples(cfg, base.config.d, FilterPolicy(policy.max_epicentral_km, policy.min_magnitude))
    result = train_phase2_transfer(base, samples, region, _train_config(cfg, policy))
    (out / "regions.json").write_text(dump_regions(regions))
    return _save_training(out, result, cfg, {"region": region.name, "freeze": cfg["freeze"]})


def cmd_eval(cfg: dict, out: Path) -> dict:
    _require(cfg, "manifest", "checkpoint")
    model = _load_model(cfg["checkpoint"])
    policy = _policy(cfg)
    samples, _ = _samples(cfg, model.config.d, FilterPolicy(policy.max_epicentral_km, policy.min_magnitude))
    train, val, test = chronological_split(samples, _split(cfg))
    reports = evaluate(model, {"train": train, "val": val, "test": test}, policy, _regions(cfg), cfg["batch"])
    rows = [r for rep in reports if rep.keys["region"] == NATIONWIDE for r in rep.rows]
    write_report_csv(out / "report.csv", rows)
    (out / "summary.json").write_text(summary_json(reports))
    return {"rows": len(rows), "snr_policy": policy.label,
            "test_mean_km": next(rep.mean_km_error for rep in reports
                                 if rep.split == "test" and rep.keys["region"] == NATIONWIDE)}


def cmd_report(cfg: dict, out: Path) -> dict:
    if not cfg.get("report") and not cfg.get("history") and not cfg.get("manifest"):
        raise CLIError("report needs at least one of --report, --history, --manifest")
    for key in ("report", "history", "manifest"):
        if cfg.get(key):
            _require(cfg, key)
    rows = read_report_csv(cfg["report"]) if cfg.get("report") else None
    history = read_history_csv(cfg["history"]) if cfg.get("history") else None
    samples = _samples(cfg, cfg["duration"], _policy(cfg))[0] if cfg.get("manifest") else None
    written = emit_plot_data(out, rows=rows, samples=samples, history=history)
    return {"files": sorted(p.name for p in written)}


HANDLERS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
            "transfer": cmd_transfer, "eval": cmd_eval, "report": cmd_report}


def run(argv: Sequence[str] | None = None) -> dict:
    """Parse, resolve and execute one subcommand; returns the run record."""
    args = build_parser().parse_args(argv)
    cfg = resolve(args)
    logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = HANDLERS[args.command](cfg, out)
    record = {"command": args.command, "config": cfg, "seed": cfg["seed"], "version": version_string(),
              "wall_time_s": round(time.perf_counter() - started, 3), "result": result}
    (out / "run.json").write_text(json.dumps(record, indent=1, sort_keys=True, default=str) + "\n")
    return record


def main(argv: Sequence[str] | None = None) -> int:
    try:
        record = run(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2 if isinstance(exc, CLIError) else 1
    print(json.dumps({"command": record["command"], "out": record["config"]["out"], **record["result"]},
                     default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
