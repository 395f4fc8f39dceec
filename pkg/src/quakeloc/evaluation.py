"""Kilometer-error metrics and per-split / per-SNR-policy / per-region reporting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .geodesy import haversine_km
from .models import LocalizationModel, predict
from .preprocess import FilterPolicy, WindowedSample, filter_samples
from .training import RegionSpec, to_arrays

REPORT_COLUMNS = ("record_id", "split", "region", "snr_db", "true_lat", "true_lon",
                  "pred_lat", "pred_lon", "km_error", "station_id", "station_lat", "station_lon")
_FLOAT_COLUMNS = ("snr_db", "true_lat", "true_lon", "pred_lat", "pred_lon", "km_error", "station_lat", "station_lon")
NATIONWIDE = "all"


def km_error(pred: tuple[float, float], station: tuple[float, float], epicenter: tuple[float, float]) -> float:
    """Distance between station + predicted offset and the true epicenter."""
    return haversine_km(station[0] + pred[0], station[1] + pred[1], epicenter[0], epicenter[1])


@dataclass(frozen=True)
class ReportRow:
    record_id: str
    split: str
    region: str | None
    snr_db: float
    true_lat: float
    true_lon: float
    pred_lat: float
    pred_lon: float
    km_error: float
    station_id: str = ""
    station_lat: float = math.nan
    station_lon: float = math.nan


def mean_std(values: Sequence[float]) -> tuple[float | None, float | None]:
    """Order-independent mean and population standard deviation."""
    n = len(values)
    if n == 0:
        return None, None
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass
class EvalReport:
    split: str
    rows: list[ReportRow]
    keys: dict = field(default_factory=dict)
    n_samples: int = 0
    mean_km_error: float | None = None
    std_km_error: float | None = None

    def __post_init__(self):
        self.n_samples = len(self.rows)
        self.mean_km_error, self.std_km_error = mean_std([r.km_error for r in self.rows])

    def summary(self) -> dict:
        return {**self.keys, "split": self.split, "mean_km": self.mean_km_error,
                "std_km": self.std_km_error, "n": self.n_samples}


def region_of(lat: float, lon: float, regions: Sequence[RegionSpec]) -> str | None:
    for region in regions:
        if region.contains(lat, lon):
            return region.name
    return None


def score_samples(model: LocalizationModel, samples: Sequence[WindowedSample], split: str,
                  regions: Sequence[RegionSpec] = (), batch_size: int = 64) -> list[ReportRow]:
    if not samples:
        return []
    arrays = to_arrays(samples, model.config)
    pred = predict(model, arrays.inputs, arrays.stations, batch_size).astype(np.float64)
    return rows_from_predictions(samples, pred, split, regions)


def rows_from_predictions(samples: Sequence[WindowedSample], pred: np.ndarray, split: str,
                          regions: Sequence[RegionSpec] = ()) -> list[ReportRow]:
    rows = []
    for s, (dlat, dlon) in zip(samples, pred):
        st_lat, st_lon = s.station
        rows.append(ReportRow(
            record_id=s.record_id, split=split,
            region=region_of(s.epicenter[0], s.epicenter[1], regions),
            snr_db=float(s.snr_db),
            true_lat=s.epicenter[0], true_lon=s.epicenter[1],
            pred_lat=st_lat + float(dlat), pred_lon=st_lon + float(dlon),
            km_error=km_error((float(dlat), float(dlon)), s.station, s.epicenter),
            station_id=s.station_id, station_lat=st_lat, station_lon=st_lon,
        ))
    return rows


def evaluate(model: LocalizationModel, splits: Mapping[str, Sequence[WindowedSample]],
             policies: Sequence[FilterPolicy] | FilterPolicy = (FilterPolicy(),),
             regions: Sequence[RegionSpec] | None = None, batch_size: int = 64) -> list[EvalReport]:
    """One report per (split, policy, region) cell; region ``"all"`` is the nationwide cell.

    Each split is scored once; policies and regions select subsets of the
    scored rows. Empty cells are reported with ``n_samples == 0``.
    """
    if isinstance(policies, FilterPolicy):
        policies = (policies,)
    regions = tuple(regions or ())
    cfg = model.config
    base_keys = {"domain": cfg.input_domain, "duration_s": cfg.d, "encoder": cfg.encoder_kind}
    reports = []
    for split, samples in splits.items():
        rows = {r.record_id: r for r in score_samples(model, samples, split, regions, batch_size)}
        for policy in policies:
            kept = [rows[s.record_id] for s in filter_samples(list(samples), policy)]
            cells = [(NATIONWIDE, kept)] + [(r.name, [x for x in kept if x.region == r.name]) for r in regions]
            for name, cell_rows in cells:
                keys = {**base_keys, "snr_policy": policy.label, "region": name}
                reports.append(EvalReport(split, cell_rows, keys))
    return reports


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def write_report_csv(path: str | Path, rows: Sequence[ReportRow]) -> None:
    Path(path).write_text(report_csv(rows))


def read_report_csv(path: str | Path) -> list[ReportRow]:
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append(ReportRow(
                record_id=r["record_id"], split=r["split"], region=r["region"] or None,
                station_id=r.get("station_id", ""),
                **{c: float(r.get(c) or "nan") for c in _FLOAT_COLUMNS},
            ))
    return rows


def summary_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps([rep.summary() for rep in reports], indent=1, sort_keys=True) + "\n"
