"""Chronological splitting, nationwide training and regional transfer."""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._rng import stream
from .geodesy import haversine_km
from .models import LocalizationModel, ModelConfig, build_model, predict, prepare_batch
from .preprocess import FilterPolicy, WindowedSample, filter_samples
from .tensor import functional as F
from .tensor.optim import AdamState, adam_step

log = logging.getLogger(__name__)

TRAIN_END_2017_08 = int(_dt.datetime(2017, 8, 31, 23, 59, 59, tzinfo=_dt.timezone.utc).timestamp())
HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_km_error")


class SplitError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch, self.batch, self.loss = epoch, batch, loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")


@dataclass(frozen=True)
class SplitSpec:
    train_end: int = TRAIN_END_2017_08
    val_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class RegionSpec:
    name: str
    center: tuple[float, float]
    radius_km: float

    def __post_init__(self):
        if not self.radius_km > 0:
            raise ValueError(f"region {self.name!r}: radius_km must be > 0")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, lat: float, lon: float) -> bool:
        return haversine_km(lat, lon, self.center[0], self.center[1]) <= self.radius_km


# Placeholder circles roughly matching the four hazard regions.
DEFAULT_REGIONS = (
    RegionSpec("Eastern", (38.8, 41.5), 300.0),
    RegionSpec("Western", (38.5, 27.5), 250.0),
    RegionSpec("Southern", (37.0, 36.0), 300.0),
    RegionSpec("NorthWestern", (40.5, 29.5), 250.0),
)


def load_regions(path: str | Path) -> tuple[RegionSpec, ...]:
    data = json.loads(Path(path).read_text())
    items = data["regions"] if isinstance(data, dict) else data
    return tuple(RegionSpec(r["name"], tuple(r["center"]), float(r["radius_km"])) for r in items)


def dump_regions(regions: Sequence[RegionSpec]) -> str:
    items = [{"name": r.name, "center": list(r.center), "radius_km": r.radius_km} for r in regions]
    return json.dumps({"regions": items}, indent=1) + "\n"


def find_region(regions: Sequence[RegionSpec], name: str) -> RegionSpec:
    for r in regions:
        if r.name == name:
            return r
    raise KeyError(f"unknown region {name!r}; known: {[r.name for r in regions]}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 100
    loss: str = "mse"
    base_lr: float = 1e-5
    decay_factor: float = 0.9
    decay_every: int = 10
    seed: int = 0
    snr_policy: FilterPolicy = field(default_factory=FilterPolicy)
    split: SplitSpec = field(default_factory=SplitSpec)
    freeze: str = "encoder"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in ("mse", "mae"):
            raise ValueError("loss must be 'mse' or 'mae'")
        if self.freeze not in ("encoder", "head"):
            raise ValueError("freeze must be 'encoder' or 'head'")


# --- splitting ----------------------------------------------------------------


def chronological_split(samples: Sequence[WindowedSample], spec: SplitSpec = SplitSpec()
                        ) -> tuple[list[WindowedSample], list[WindowedSample], list[WindowedSample]]:
    """(train, val, test) by origin time; validation is the latest ``val_fraction`` of training events."""
    ordered = sorted(samples, key=lambda s: (s.origin_time, s.record_id))
    test = [s for s in ordered if s.origin_time > spec.train_end]
    early = [s for s in ordered if s.origin_time <= spec.train_end]
    if not test:
        raise SplitError(f"empty test partition: no sample after {spec.train_end}")
    if not early:
        raise SplitError(f"empty train partition: no sample at or before {spec.train_end}")

    events: list[str] = []
    seen: set[str] = set()
    for s in early:
        key = s.event_id or s.record_id
        if key not in seen:
            seen.add(key)
            events.append(key)
    n_val = int(round(spec.val_fraction * len(events)))
    if spec.val_fraction > 0 and len(events) > 1:
        n_val = max(1, n_val)
    n_val = min(n_val, len(events) - 1)
    val_events = set(events[len(events) - n_val :]) if n_val else set()
    train = [s for s in early if (s.event_id or s.record_id) not in val_events]
    val = [s for s in early if (s.event_id or s.record_id) in val_events]
    return train, val, test


# --- training loop ----------------------------------------------------------------


@dataclass
class Arrays:
    inputs: np.ndarray
    stations: np.ndarray
    targets: np.ndarray
    epicenters: np.ndarray

    def __len__(self) -> int:
        return len(self.inputs)


def to_arrays(samples: Sequence[WindowedSample], config: ModelConfig) -> Arrays:
    for s in samples:
        if s.duration_s != config.d:
            raise ValueError(f"sample {s.record_id} has d={s.duration_s}, model expects d={config.d}")
    return Arrays(
        inputs=prepare_batch([s.window for s in samples], config),
        stations=np.array([s.station for s in samples], dtype=np.float32).reshape(-1, 2),
        targets=np.array([s.ground_truth for s in samples], dtype=np.float32).reshape(-1, 2),
        epicenters=np.array([s.epicenter for s in samples], dtype=np.float64).reshape(-1, 2),
    )


def mean_km_error(pred: np.ndarray, stations: np.ndarray, epicenters: np.ndarray) -> float:
    if not len(pred):
        return math.nan
    est = stations.astype(np.float64) + pred.astype(np.float64)
    return float(np.mean([haversine_km(a, b, c, d) for (a, b), (c, d) in zip(est, epicenters)]))


def _loss(pred, target, kind: str):
    return F.mse_loss(pred, target) if kind == "mse" else F.mae_loss(pred, target)


def _loss_value(pred: np.ndarray, target: np.ndarray, kind: str) -> float:
    if not len(pred):
        return math.nan
    diff = pred.astype(np.float64) - target
    return float(np.mean(diff**2) if kind == "mse" else np.mean(np.abs(diff)))


@dataclass
class TrainResult:
    model: LocalizationModel
    history: list[dict]
    best_epoch: int
    best_state: dict[str, np.ndarray]
    optimizer: AdamState
    splits: dict[str, list[WindowedSample]]

    def best_model(self) -> LocalizationModel:
        model = build_model(self.model.config)
        model.load_state_dict(self.best_state)
        _copy_trainable(self.model, model)
        return model


def _copy_trainable(src: LocalizationModel, dst: LocalizationModel) -> None:
    flags = {n: p.trainable for n, p in src.named_parameters()}
    for n, p in dst.named_parameters():
        p.trainable = flags[n]


def batch_order(n: int, seed: int, epoch: int, batch_size: int) -> list[np.ndarray]:
    """Shuffled mini-batch indices; the last partial batch is kept."""
    perm = stream(seed, "shuffle", epoch).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def fit(model: LocalizationModel, train: Arrays, val: Arrays, config: TrainConfig,
        optimizer: AdamState | None = None, start_epoch: int = 0) -> tuple[list[dict], int, dict, AdamState]:
    """Run the epoch loop on prepared arrays; returns (history, best epoch, best state, optimizer)."""
    if not len(train):
        raise SplitError("empty training set")
    if optimizer is None:
        optimizer = AdamState(config.base_lr, config.decay_factor, config.decay_every)
    params = [p for p in model.parameters() if p.trainable]
    history: list[dict] = []
    best = (math.inf, -1)
    best_state = model.state_dict()
    for epoch in range(start_epoch, config.epochs):
        lr = optimizer.lr(epoch)
        total, count = 0.0, 0
        for b, idx in enumerate(batch_order(len(train), config.seed, epoch, config.batch_size)):
            model.zero_grad()
            rng = stream(config.seed, "dropout", epoch, b)
            pred = model(train.inputs[idx], train.stations[idx], rng=rng)
            loss = _loss(pred, train.targets[idx], config.loss)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, b, value)
            loss.backward()
            adam_step(params, optimizer, epoch)
            total += value * len(idx)
            count += len(idx)
        train_loss = total / count
        if len(val):
            val_pred = predict(model, val.inputs, val.stations, config.batch_size)
            val_loss = _loss_value(val_pred, val.targets, config.loss)
            val_km = mean_km_error(val_pred, val.stations, val.epicenters)
            score = val_km
        else:
            val_loss = val_km = math.nan
            score = train_loss
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                        "val_loss": val_loss, "val_km_error": val_km})
        log.info("epoch %d lr %.3g train %.5f val %.5f val_km %.2f", epoch, lr, train_loss, val_loss, val_km)
        if score < best[0]:
            best = (score, epoch)
            best_state = model.state_dict()
    return history, best[1], best_state, optimizer


def train_phase1(samples: Sequence[WindowedSample], model_config: ModelConfig, train_config: TrainConfig
                 ) -> TrainResult:
    """Nationwide training on the chronological training split of ``samples``."""
    if not samples:
        raise SplitError("no samples to train on")
    pool = filter_samples(list(samples), train_config.snr_policy)
    train, val, test = chronological_split(pool, train_config.split)
    model = build_model(model_config)
    model.train()
    history, best_epoch, best_state, opt = fit(
        model, to_arrays(train, model_config), to_arrays(val, model_config), train_config)
    return TrainResult(model, history, best_epoch, best_state, opt, {"train": train, "val": val, "test": test})


def region_members(samples: Sequence[WindowedSample], region: RegionSpec) -> list[WindowedSample]:
    return [s for s in samples if region.contains(*s.epicenter)]


def clone_model(model: LocalizationModel) -> LocalizationModel:
    twin = build_model(model.config)
    twin.load_state_dict(model.state_dict())
    return twin


def train_phase2_transfer(base: LocalizationModel, region_samples: Sequence[WindowedSample],
                          region: RegionSpec, train_config: TrainConfig) -> TrainResult:
    """Fine-tune a copy of ``base`` on one region with the encoder (or head) frozen.

    The frozen part also runs in inference mode, so its batch-norm running
    moments stay untouched along with its weights.
    """
    pool = filter_samples(region_members(region_samples, region), train_config.snr_policy)
    if not pool:
        raise SplitError(f"region {region.name!r} has no samples")
    train, val, test = chronological_split(pool, train_config.split)
    model = clone_model(base)
    frozen = train_config.freeze
    model.train()
    model.set_frozen(frozen, True)
    getattr(model, frozen).eval()
    history, best_epoch, best_state, opt = fit(
        model, to_arrays(train, model.config), to_arrays(val, model.config), train_config)
    return TrainResult(model, history, best_epoch, best_state, opt, {"train": train, "val": val, "test": test})


def history_csv(history: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_COLUMNS)
    for row in history:
        writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])
    return buf.getvalue()


def read_history_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {"epoch": int(r["epoch"]), **{c: float(r[c]) for c in HISTORY_COLUMNS[1:]}}
            for r in csv.DictReader(fh)
        ]
