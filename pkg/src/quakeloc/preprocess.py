"""PGA anchoring, window extraction, SNR estimation and dataset filtering."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geodesy import haversine_km
from .records import SAMPLE_RATE_HZ, Manifest, ManifestEntry, StrongMotionRecord

NOISE_WINDOW_S = 5.0
DURATIONS_S = (15, 30, 60)
EXCLUSION_REASONS = ("distance", "magnitude", "duration", "snr")


@dataclass(frozen=True, eq=False)
class WindowedSample:
    record_id: str
    window: np.ndarray  # (3, d * 100) gal
    duration_s: int
    t_pga_s: float
    snr_db: float
    epicentral_distance_km: float
    ground_truth: tuple[float, float]  # (dlat, dlon) degrees, epicenter - station
    station: tuple[float, float]
    epicenter: tuple[float, float]
    origin_time: int
    event_id: str = ""
    station_id: str = ""
    magnitude: float = float("nan")
    depth_km: float = float("nan")


@dataclass(frozen=True)
class FilterPolicy:
    max_epicentral_km: float = 110.0
    min_magnitude: float = 3.5
    min_snr_db: float | None = None

    def __post_init__(self):
        if not self.max_epicentral_km > 0:
            raise ValueError("max_epicentral_km must be > 0")
        if math.isnan(self.max_epicentral_km) or not math.isfinite(self.min_magnitude):
            raise ValueError("filter thresholds must be finite")
        if self.min_snr_db is not None and not math.isfinite(self.min_snr_db):
            raise ValueError("min_snr_db must be finite or None")

    @property
    def label(self) -> str:
        return "all" if self.min_snr_db is None else f"snr>={self.min_snr_db:g}"

    def snr_passes(self, snr: float) -> bool:
        return self.min_snr_db is None or snr >= self.min_snr_db


NO_FILTER = FilterPolicy(max_epicentral_km=math.inf, min_magnitude=0.0, min_snr_db=None)


@dataclass
class FilterReport:
    input: int = 0
    retained: int = 0
    excluded: dict[str, int] = field(default_factory=lambda: {r: 0 for r in EXCLUSION_REASONS})
    skipped_short: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"input": self.input, "retained": self.retained, "excluded": dict(self.excluded)}


def pga_instant(channels: np.ndarray, sample_rate: float = SAMPLE_RATE_HZ) -> float:
    """Median over channels of the time (s) of peak absolute acceleration.

    Ties within a channel resolve to the earliest sample.
    """
    channels = np.asarray(channels)
    if channels.ndim != 2 or channels.shape[1] == 0:
        raise ValueError("pga_instant needs non-empty channels")
    idx = np.sort(np.argmax(np.abs(channels), axis=1))
    return float(idx[len(idx) // 2]) / sample_rate


def window_bounds(n_total: int, t_pga: float, d: float, sample_rate: float = SAMPLE_RATE_HZ) -> tuple[int, int]:
    n = int(round(d * sample_rate))
    if n_total < n:
        raise ValueError(f"record of {n_total} samples is shorter than the {d} s window")
    start = int(round(t_pga * sample_rate)) - n // 2
    start = min(max(start, 0), n_total - n)
    return start, start + n


def extract_window(channels: np.ndarray, t_pga: float, d: float,
                   sample_rate: float = SAMPLE_RATE_HZ) -> np.ndarray:
    """The d-second excerpt centred on ``t_pga``; shifted to the first/last d seconds at the edges."""
    channels = np.asarray(channels)
    start, stop = window_bounds(channels.shape[1], t_pga, d, sample_rate)
    return channels[:, start:stop]


def snr_db(channels: np.ndarray, t_pga: float, d: float, sample_rate: float = SAMPLE_RATE_HZ) -> float:
    """Power ratio (dB) of the PGA window against the first 5 s, pooled over channels.

    Returns +inf when the noise window is all zeros.
    """
    channels = np.asarray(channels, dtype=np.float64)
    n_noise = int(round(NOISE_WINDOW_S * sample_rate))
    if channels.shape[1] < n_noise:
        raise ValueError("record shorter than the 5 s noise window")
    signal = extract_window(channels, t_pga, d, sample_rate)
    p_signal = float(np.mean(signal**2))
    p_noise = float(np.mean(channels[:, :n_noise] ** 2))
    if p_noise == 0.0:
        return math.inf
    if p_signal == 0.0:
        return -math.inf
    return 10.0 * math.log10(p_signal / p_noise)


def make_sample(record: StrongMotionRecord, d: int) -> WindowedSample:
    ch = record.channels
    t_pga = pga_instant(ch, record.sample_rate_hz)
    ev, st = record.event, record.station
    return WindowedSample(
        record_id=record.record_id,
        window=np.ascontiguousarray(extract_window(ch, t_pga, d, record.sample_rate_hz), dtype=np.float32),
        duration_s=int(d),
        t_pga_s=t_pga,
        snr_db=snr_db(ch, t_pga, d, record.sample_rate_hz),
        epicentral_distance_km=haversine_km(ev.epicenter_lat, ev.epicenter_lon, st.latitude, st.longitude),
        ground_truth=(ev.epicenter_lat - st.latitude, ev.epicenter_lon - st.longitude),
        station=(st.latitude, st.longitude),
        epicenter=(ev.epicenter_lat, ev.epicenter_lon),
        origin_time=ev.origin_time,
        event_id=ev.event_id,
        station_id=st.station_id,
        magnitude=ev.magnitude,
        depth_km=ev.depth_km,
    )


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("QUAKELOC_THREADS", "1")))
    except ValueError:
        return 1


def _metadata_reason(entry: ManifestEntry, policy: FilterPolicy) -> str | None:
    if entry.epicentral_distance_km > policy.max_epicentral_km:
        return "distance"
    if entry.event.magnitude < policy.min_magnitude:
        return "magnitude"
    return None


def apply_filters(manifest: Manifest, d: int, policy: FilterPolicy = FilterPolicy()
                  ) -> tuple[list[WindowedSample], FilterReport]:
    """Window every record that survives the filters, in manifest order.

    Each excluded record is counted once, under the first failing reason in
    the order distance, magnitude, duration, snr.
    """
    report = FilterReport(input=len(manifest))

    def work(entry: ManifestEntry):
        reason = _metadata_reason(entry, policy)
        if reason:
            return reason, None
        record = entry.load()
        if record.channels.shape[1] < int(round(d * record.sample_rate_hz)):
            return "duration", None
        sample = make_sample(record, d)
        if not policy.snr_passes(sample.snr_db):
            return "snr", None
        return None, sample

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, manifest.entries))
    else:
        results = [work(e) for e in manifest.entries]

    samples = []
    for entry, (reason, sample) in zip(manifest.entries, results):
        if reason is None:
            samples.append(sample)
        else:
            report.excluded[reason] += 1
            if reason == "duration":
                report.skipped_short.append(entry.record_id)
    report.retained = len(samples)
    return samples, report


def filter_samples(samples: list[WindowedSample], policy: FilterPolicy) -> list[WindowedSample]:
    """Re-apply a policy to already windowed samples (distance, magnitude, snr)."""
    return [
        s for s in samples
        if s.epicentral_distance_km <= policy.max_epicentral_km
        and not (s.magnitude < policy.min_magnitude)
        and policy.snr_passes(s.snr_db)
    ]
