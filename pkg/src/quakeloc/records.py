"""Strong-motion record model, waveform/manifest file formats and ingestion.

Waveform file layout (little-endian)::

    b"SMR1" | u32 channel count (=3) | u32 samples per channel | float32 samples, channel-major

Manifest layout: JSON lines. The first line is ``{"schema_version": 1}``, every
following line describes one record (see :func:`entry_to_json`).
"""

from __future__ import annotations

import datetime as _dt
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geodesy import haversine_km

SAMPLE_RATE_HZ = 100
N_CHANNELS = 3
CHANNEL_NAMES = ("E-W", "N-S", "U-D")
MIN_SAMPLES = 500
MAX_DURATION_S = 300.0
SCHEMA_VERSION = 1

WAVEFORM_MAGIC = b"SMR1"
_HEADER = struct.Struct("<4sII")


class ManifestError(ValueError):
    """Invalid manifest content; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class MissingWaveformError(ManifestError):
    def __init__(self, path: Path, line: int | None = None):
        self.path = Path(path)
        super().__init__(f"missing waveform file: {path}", line)


class WaveformFormatError(ValueError):
    """Malformed waveform file (bad magic, truncated, inconsistent channels)."""


def _check_lat(value: float, what: str) -> None:
    if not (math.isfinite(value) and -90.0 <= value <= 90.0):
        raise ValueError(f"{what} latitude out of range [-90, 90]: {value}")


def _check_lon(value: float, what: str) -> None:
    if not (math.isfinite(value) and -180.0 <= value <= 180.0):
        raise ValueError(f"{what} longitude out of range [-180, 180]: {value}")


@dataclass(frozen=True)
class StationMeta:
    station_id: str
    latitude: float
    longitude: float

    def __post_init__(self):
        _check_lat(self.latitude, "station")
        _check_lon(self.longitude, "station")


@dataclass(frozen=True)
class EventMeta:
    event_id: str
    origin_time: int  # UTC epoch seconds
    epicenter_lat: float
    epicenter_lon: float
    depth_km: float
    magnitude: float

    def __post_init__(self):
        _check_lat(self.epicenter_lat, "epicenter")
        _check_lon(self.epicenter_lon, "epicenter")
        if not (math.isfinite(self.depth_km) and self.depth_km >= 0):
            raise ValueError(f"depth_km must be >= 0: {self.depth_km}")
        if not (math.isfinite(self.magnitude) and self.magnitude >= 0):
            raise ValueError(f"magnitude must be >= 0: {self.magnitude}")


@dataclass(frozen=True, eq=False)
class StrongMotionRecord:
    record_id: str
    event: EventMeta
    station: StationMeta
    channels: np.ndarray  # (3, n) gal, [E-W, N-S, U-D]
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        if self.sample_rate_hz != SAMPLE_RATE_HZ:
            raise ValueError(f"sample rate must be {SAMPLE_RATE_HZ} Hz, got {self.sample_rate_hz}")
        ch = self.channels
        if ch.ndim != 2 or ch.shape[0] != N_CHANNELS:
            raise ValueError(f"expected 3 channels, got array of shape {ch.shape}")
        if ch.shape[1] < MIN_SAMPLES:
            raise ValueError(f"record shorter than {MIN_SAMPLES} samples: {ch.shape[1]}")
        if self.duration_s > MAX_DURATION_S:
            raise ValueError(f"record longer than {MAX_DURATION_S} s: {self.duration_s}")

    @property
    def duration_s(self) -> float:
        return self.channels.shape[1] / self.sample_rate_hz

    @property
    def epicentral_distance_km(self) -> float:
        return haversine_km(
            self.event.epicenter_lat, self.event.epicenter_lon,
            self.station.latitude, self.station.longitude,
        )


@dataclass(frozen=True)
class ManifestEntry:
    record_id: str
    event: EventMeta
    station: StationMeta
    waveform_path: Path
    sample_rate_hz: int = SAMPLE_RATE_HZ

    @property
    def epicentral_distance_km(self) -> float:
        return haversine_km(
            self.event.epicenter_lat, self.event.epicenter_lon,
            self.station.latitude, self.station.longitude,
        )

    def sort_key(self) -> tuple[int, str]:
        return (self.event.origin_time, self.record_id)

    def load(self) -> StrongMotionRecord:
        return StrongMotionRecord(
            record_id=self.record_id,
            event=self.event,
            station=self.station,
            channels=read_waveform(self.waveform_path),
            sample_rate_hz=self.sample_rate_hz,
        )


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def sorted(self) -> "Manifest":
        """Entries ordered by (origin_time, record_id)."""
        return Manifest(tuple(sorted(self.entries, key=ManifestEntry.sort_key)), self.schema_version)


# --- waveform files -------------------------------------------------------


def write_waveform(path: str | Path, channels: np.ndarray) -> None:
    data = np.asarray(channels)
    if data.ndim != 2 or data.shape[0] != N_CHANNELS:
        raise ValueError(f"expected 3 x N channels, got shape {data.shape}")
    blob = np.ascontiguousarray(data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WAVEFORM_MAGIC, data.shape[0], data.shape[1]))
        fh.write(blob)


def _read_header(fh, path) -> tuple[int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise WaveformFormatError(f"{path}: truncated header")
    magic, n_channels, n_samples = _HEADER.unpack(raw)
    if magic != WAVEFORM_MAGIC:
        raise WaveformFormatError(f"{path}: bad magic bytes {magic!r}")
    if n_channels != N_CHANNELS:
        raise WaveformFormatError(f"{path}: expected 3 channels, header says {n_channels}")
    return n_channels, n_samples


def read_waveform(path: str | Path) -> np.ndarray:
    """Read a waveform file into a (3, n) float32 array in gal."""
    with open(path, "rb") as fh:
        n_channels, n_samples = _read_header(fh, path)
        payload = fh.read()
    expected = n_channels * n_samples * 4
    if len(payload) < expected:
        raise WaveformFormatError(
            f"{path}: truncated data ({len(payload)} of {expected} bytes)"
        )
    if len(payload) > expected:
        # header length disagrees with the payload: channels are not equal length
        raise WaveformFormatError(
            f"{path}: channel-length mismatch ({len(payload)} bytes for {n_channels}x{n_samples})"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(n_channels, n_samples).astype(np.float32)


def check_waveform(path: Path) -> int:
    """Validate header and size without loading samples; returns samples per channel."""
    with open(path, "rb") as fh:
        n_channels, n_samples = _read_header(fh, path)
    size = path.stat().st_size - _HEADER.size
    if size != n_channels * n_samples * 4:
        raise WaveformFormatError(f"{path}: payload size {size} does not match header")
    return n_samples


# --- manifest files -------------------------------------------------------


def parse_time(value) -> int:
    """UTC epoch seconds from an int/float or an ISO-8601 string."""
    if isinstance(value, bool):
        raise ValueError(f"invalid origin time: {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).replace("Z", "+00:00")
    stamp = _dt.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return int(stamp.timestamp())


def format_time(epoch: int) -> str:
    return _dt.datetime.fromtimestamp(epoch, tz=_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def entry_to_json(entry: ManifestEntry, base_dir: Path | None = None) -> dict:
    path = entry.waveform_path
    if base_dir is not None:
        try:
            path = path.relative_to(base_dir)
        except ValueError:
            pass
    ev, st = entry.event, entry.station
    return {
        "record_id": entry.record_id,
        "event": {
            "event_id": ev.event_id,
            "origin_time_utc": ev.origin_time,
            "lat": ev.epicenter_lat,
            "lon": ev.epicenter_lon,
            "depth_km": ev.depth_km,
            "magnitude": ev.magnitude,
        },
        "station": {"station_id": st.station_id, "lat": st.latitude, "lon": st.longitude},
        "waveform_path": path.as_posix(),
        "sample_rate_hz": entry.sample_rate_hz,
    }


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    path = Path(path)
    base = path.parent.resolve()
    lines = [json.dumps({"schema_version": SCHEMA_VERSION})]
    lines += [json.dumps(entry_to_json(e, base)) for e in entries]
    path.write_text("\n".join(lines) + "\n")


def _entry_from_json(obj: dict, base_dir: Path, line: int) -> ManifestEntry:
    try:
        ev = obj["event"]
        st = obj["station"]
        event = EventMeta(
            event_id=str(ev["event_id"]),
            origin_time=parse_time(ev["origin_time_utc"]),
            epicenter_lat=float(ev["lat"]),
            epicenter_lon=float(ev["lon"]),
            depth_km=float(ev["depth_km"]),
            magnitude=float(ev["magnitude"]),
        )
        station = StationMeta(str(st["station_id"]), float(st["lat"]), float(st["lon"]))
        rate = int(obj.get("sample_rate_hz", SAMPLE_RATE_HZ))
        if rate != SAMPLE_RATE_HZ:
            raise ValueError(f"sample_rate_hz must be {SAMPLE_RATE_HZ}, got {rate}")
        wf = Path(obj["waveform_path"])
        return ManifestEntry(
            record_id=str(obj["record_id"]),
            event=event,
            station=station,
            waveform_path=wf if wf.is_absolute() else base_dir / wf,
            sample_rate_hz=rate,
        )
    except KeyError as exc:
        raise ManifestError(f"missing field {exc}", line) from None
    except (TypeError, ValueError) as exc:
        raise ManifestError(str(exc), line) from None


def validate_entries(entries: Sequence[ManifestEntry], lines: Sequence[int] | None = None) -> None:
    """Cross-entry checks: unique record ids, consistent station and event metadata."""
    lines = lines or [None] * len(entries)
    seen_records: set[str] = set()
    stations: dict[str, StationMeta] = {}
    events: dict[str, EventMeta] = {}
    for entry, line in zip(entries, lines):
        if entry.record_id in seen_records:
            raise ManifestError(f"duplicate record_id {entry.record_id!r}", line)
        seen_records.add(entry.record_id)
        known = stations.setdefault(entry.station.station_id, entry.station)
        if known != entry.station:
            raise ManifestError(f"station {entry.station.station_id!r} has conflicting coordinates", line)
        known_ev = events.setdefault(entry.event.event_id, entry.event)
        if known_ev != entry.event:
            raise ManifestError(f"event {entry.event.event_id!r} has conflicting metadata", line)


def load_manifest(path: str | Path, check_files: bool = True) -> Manifest:
    """Parse and validate a JSON-lines manifest.

    Waveform paths are resolved relative to the manifest's directory. With
    ``check_files`` every referenced waveform header is opened and checked.
    """
    path = Path(path)
    base_dir = path.parent
    entries: list[ManifestEntry] = []
    line_numbers: list[int] = []
    schema = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"JSON parse error: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise ManifestError("expected a JSON object", lineno)
            if schema is None:
                if "schema_version" not in obj:
                    raise ManifestError("first line must be a {schema_version} header", lineno)
                schema = obj["schema_version"]
                if schema != SCHEMA_VERSION:
                    raise ManifestError(f"unsupported schema_version {schema}", lineno)
                continue
            entry = _entry_from_json(obj, base_dir, lineno)
            if check_files:
                if not entry.waveform_path.is_file():
                    raise MissingWaveformError(entry.waveform_path, lineno)
                try:
                    n = check_waveform(entry.waveform_path)
                except WaveformFormatError as exc:
                    raise ManifestError(str(exc), lineno) from None
                if n < MIN_SAMPLES or n / SAMPLE_RATE_HZ > MAX_DURATION_S:
                    raise ManifestError(f"{entry.waveform_path}: duration out of range ({n} samples)", lineno)
            entries.append(entry)
            line_numbers.append(lineno)
    if schema is None:
        raise ManifestError("empty manifest (no header line)", 1)
    validate_entries(entries, line_numbers)
    return Manifest(tuple(entries), schema)
