"""Synthetic strong-motion dataset generator.

Stands in for a real accelerogram archive. The waveforms are crude but carry
the event location by construction:

* a P-like and an S-like wave packet whose arrival gap is proportional to the
  epicentral distance (fixed apparent velocities below),
* amplitudes that decay with distance and grow with magnitude,
* horizontal/vertical and E-W/N-S amplitude ratios that encode distance and
  back-azimuth (station -> epicenter direction),
* S-packet duration growing and dominant frequency falling with distance.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geodesy
from ._rng import stream
from .records import (
    SAMPLE_RATE_HZ,
    EventMeta,
    Manifest,
    ManifestEntry,
    StationMeta,
    write_manifest,
    write_waveform,
)

P_VELOCITY_KM_S = 7.0
S_VELOCITY_KM_S = 5.0
P_FREQ_HZ = 6.0
P_RISE_S = 0.25
P_RELATIVE_AMPLITUDE = 0.4
# horizontal/vertical crossover distance of the amplitude-ratio cue
INCIDENCE_SCALE_KM = 25.0
AZIMUTH_GAIN = 0.7

_EPOCH_2012 = int(_dt.datetime(2012, 1, 1, tzinfo=_dt.timezone.utc).timestamp())
_EPOCH_2020 = int(_dt.datetime(2020, 1, 1, tzinfo=_dt.timezone.utc).timestamp())


@dataclass(frozen=True)
class SynthConfig:
    n_events: int = 200
    n_stations: int = 8
    # (lat_min, lat_max, lon_min, lon_max) box for random station placement
    region: tuple[float, float, float, float] = (36.0, 42.0, 26.0, 45.0)
    stations: tuple[tuple[float, float], ...] | None = None
    min_event_distance_km: float = 5.0
    max_event_distance_km: float = 100.0
    record_radius_km: float = 110.0
    magnitude_range: tuple[float, float] = (3.6, 5.5)
    depth_range_km: tuple[float, float] = (5.0, 25.0)
    duration_s: float = 60.0
    pre_event_s: float = 8.0
    noise_gal: float = 0.05
    amplitude_scale: float = 1.0
    noisy_fraction: float = 0.0
    noisy_noise_ratio: float = 0.3
    start_time: int = _EPOCH_2012
    end_time: int = _EPOCH_2020

    def validate(self) -> None:
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        n_st = len(self.stations) if self.stations is not None else self.n_stations
        if n_st < 1:
            raise ValueError("at least one station is required")
        lat0, lat1, lon0, lon1 = self.region
        if self.stations is None and not (lat0 < lat1 and lon0 < lon1):
            raise ValueError(f"empty region box {self.region}")
        if not (0 <= self.min_event_distance_km <= self.max_event_distance_km):
            raise ValueError("invalid event distance range")
        if not (5.0 <= self.duration_s <= 300.0):
            raise ValueError("duration_s must lie in [5, 300]")
        if self.magnitude_range[0] > self.magnitude_range[1] or self.magnitude_range[0] < 0:
            raise ValueError("invalid magnitude range")
        if not (0.0 <= self.noisy_fraction <= 1.0):
            raise ValueError("noisy_fraction must lie in [0, 1]")
        if self.end_time <= self.start_time:
            raise ValueError("end_time must be after start_time")


def s_minus_p_gap_s(distance_km: float) -> float:
    return distance_km * (1.0 / S_VELOCITY_KM_S - 1.0 / P_VELOCITY_KM_S)


def peak_amplitude_gal(distance_km: float, magnitude: float, scale: float = 1.0) -> float:
    return scale * 100.0 * 10.0 ** (0.5 * (magnitude - 4.0)) * 20.0 / (distance_km + 20.0)


def channel_gains(distance_km: float, azimuth_deg: float) -> np.ndarray:
    """Per-channel [E, N, U] gains shared by both packets."""
    horiz = 0.2 + distance_km / (distance_km + INCIDENCE_SCALE_KM)
    vert = 0.2 + INCIDENCE_SCALE_KM / (distance_km + INCIDENCE_SCALE_KM)
    az = math.radians(azimuth_deg)
    return np.array([
        horiz * (1.0 + AZIMUTH_GAIN * math.sin(az)),
        horiz * (1.0 + AZIMUTH_GAIN * math.cos(az)),
        vert,
    ])


def _packet(t: np.ndarray, onset: float, rise: float, freq: float, phase: float) -> np.ndarray:
    tau = t - onset
    env = np.where(tau > 0, (tau / rise) * np.exp(1.0 - tau / rise), 0.0)
    return env * np.sin(2 * np.pi * freq * tau + phase)


def render_waveform(
    n_samples: int,
    origin_s: float,
    distance_km: float,
    azimuth_deg: float,
    magnitude: float,
    rng: np.random.Generator,
    noise_gal: float = 0.0,
    amplitude_scale: float = 1.0,
    phases: tuple[str, ...] = ("P", "S"),
) -> tuple[np.ndarray, dict[str, float]]:
    """Render one 3-channel accelerogram (gal) and return it with its phase arrival times (s)."""
    t = np.arange(n_samples) / SAMPLE_RATE_HZ
    t_p = origin_s + distance_km / P_VELOCITY_KM_S
    t_s = origin_s + distance_km / S_VELOCITY_KM_S
    amp = peak_amplitude_gal(distance_km, magnitude, amplitude_scale)
    phi_p, phi_s = rng.uniform(0, 2 * np.pi, size=2)
    trace = np.zeros(n_samples)
    if "P" in phases:
        trace += P_RELATIVE_AMPLITUDE * _packet(t, t_p, P_RISE_S, P_FREQ_HZ, phi_p)
    if "S" in phases:
        s_rise = 0.4 + distance_km / 150.0
        s_freq = 3.5 - 1.5 * min(distance_km, 110.0) / 110.0
        trace += _packet(t, t_s, s_rise, s_freq, phi_s)
    channels = amp * channel_gains(distance_km, azimuth_deg)[:, None] * trace[None, :]
    if noise_gal > 0:
        channels = channels + rng.normal(0.0, noise_gal, size=channels.shape)
    return channels.astype(np.float32), {"P": t_p, "S": t_s}


def _place_stations(config: SynthConfig, seed: int) -> list[StationMeta]:
    if config.stations is not None:
        coords = list(config.stations)
    else:
        rng = stream(seed, "synth.stations")
        lat0, lat1, lon0, lon1 = config.region
        coords = [
            (float(rng.uniform(lat0, lat1)), float(rng.uniform(lon0, lon1)))
            for _ in range(config.n_stations)
        ]
    return [
        StationMeta(f"ST{j:02d}", round(lat, 5), round(lon, 5))
        for j, (lat, lon) in enumerate(coords)
    ]


def synth_generate(config: SynthConfig, seed: int, out_dir: str | Path) -> Manifest:
    """Write ``manifest.jsonl`` and ``waveforms/*.smr`` under ``out_dir``.

    Output bytes are a pure function of (config, seed).
    """
    config.validate()
    out_dir = Path(out_dir)
    wf_dir = out_dir / "waveforms"
    wf_dir.mkdir(parents=True, exist_ok=True)

    stations = _place_stations(config, seed)
    ev_rng = stream(seed, "synth.events")
    times = np.sort(ev_rng.integers(config.start_time, config.end_time, size=config.n_events))
    n_samples = int(round(config.duration_s * SAMPLE_RATE_HZ))

    entries: list[ManifestEntry] = []
    for i in range(config.n_events):
        anchor = stations[int(ev_rng.integers(len(stations)))]
        dist = ev_rng.uniform(config.min_event_distance_km, config.max_event_distance_km)
        az = ev_rng.uniform(0.0, 360.0)
        lat, lon = geodesy.destination(anchor.latitude, anchor.longitude, az, dist)
        event = EventMeta(
            event_id=f"ev{i:05d}",
            origin_time=int(times[i]),
            epicenter_lat=round(lat, 5),
            epicenter_lon=round(lon, 5),
            depth_km=round(float(ev_rng.uniform(*config.depth_range_km)), 2),
            magnitude=round(float(ev_rng.uniform(*config.magnitude_range)), 2),
        )
        for st in stations:
            d_km = geodesy.haversine_km(event.epicenter_lat, event.epicenter_lon, st.latitude, st.longitude)
            if st is not anchor and d_km > config.record_radius_km:
                continue
            record_id = f"{event.event_id}.{st.station_id}"
            rec_rng = stream(seed, "synth.record", i, int(st.station_id[2:]))
            noisy = rec_rng.random() < config.noisy_fraction
            baz = geodesy.bearing_deg(st.latitude, st.longitude, event.epicenter_lat, event.epicenter_lon)
            origin_s = config.pre_event_s + rec_rng.uniform(0.0, 2.0)
            noise = config.noise_gal
            if noisy:
                noise = max(noise, config.noisy_noise_ratio
                            * peak_amplitude_gal(d_km, event.magnitude, config.amplitude_scale))
            channels, _ = render_waveform(
                n_samples, origin_s, d_km, baz, event.magnitude, rec_rng,
                noise_gal=noise, amplitude_scale=config.amplitude_scale,
            )
            path = wf_dir / f"{record_id}.smr"
            write_waveform(path, channels)
            entries.append(ManifestEntry(record_id, event, st, path.resolve()))

    manifest = Manifest(tuple(entries))
    write_manifest(out_dir / "manifest.jsonl", entries)
    return manifest
