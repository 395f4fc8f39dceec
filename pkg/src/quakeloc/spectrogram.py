"""Magnitude-squared STFT spectrograms with 1 s Hann frames and 0.5 s hop.

For a d-second window at 100 Hz this yields 51 frequency bins (0..50 Hz) by
2d - 1 frames; frames must fit entirely inside the window, no padding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

WIN_LEN = 100
HOP = 50
N_BINS = WIN_LEN // 2 + 1
DB_FLOOR = 1e-10


def hann(n: int) -> np.ndarray:
    """Periodic Hann taper."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # (bins, frames, channels)
    d: int
    scale: str = "power"
    freq_resolution_hz: float = 1.0
    frame_hop_s: float = 0.5

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape


def n_frames(n_samples: int, win_len: int = WIN_LEN, hop: int = HOP) -> int:
    return (n_samples - win_len) // hop + 1


def stft_power(window: np.ndarray, win_len: int = WIN_LEN, hop: int = HOP) -> np.ndarray:
    """One-sided |STFT|^2 of a single channel, shape (win_len/2 + 1, frames)."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"stft_power expects a 1-D channel, got shape {x.shape}")
    if win_len % 2 or hop * 2 != win_len:
        raise ValueError("win_len must be even and hop = win_len / 2")
    if x.size < win_len or x.size % win_len:
        raise ValueError(f"input length {x.size} is not a whole number of {win_len}-sample seconds")
    frames = np.lib.stride_tricks.sliding_window_view(x, win_len)[::hop]
    spec = np.fft.rfft(frames * hann(win_len), n=win_len, axis=1)
    return (spec.real**2 + spec.imag**2).T


def spectrogram3(window: np.ndarray) -> Spectrogram:
    """Per-channel power spectrogram of a (3, d*100) window, stacked to (51, 2d-1, 3)."""
    window = np.asarray(window)
    if window.ndim != 2 or window.shape[0] != 3:
        raise ValueError(f"expected a (3, n) window, got {window.shape}")
    planes = [stft_power(ch) for ch in window]
    return Spectrogram(np.stack(planes, axis=-1), d=window.shape[1] // WIN_LEN)


def to_db(spec: Spectrogram, floor: float = DB_FLOOR) -> Spectrogram:
    if spec.scale != "power":
        raise ValueError("to_db expects a power-scale spectrogram")
    values = 10.0 * np.log10(np.maximum(spec.values, floor))
    return Spectrogram(values, spec.d, "db", spec.freq_resolution_hz, spec.frame_hop_s)


def write_spectrogram(path: str | Path, spec: Spectrogram) -> None:
    """Flat little-endian float32 blob at ``path`` plus a ``.json`` sidecar."""
    path = Path(path)
    bins, frames, channels = spec.values.shape
    path.write_bytes(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())
    sidecar = {"bins": bins, "frames": frames, "channels": channels, "scale": spec.scale}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_spectrogram(path: str | Path) -> Spectrogram:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    shape = (meta["bins"], meta["frames"], meta["channels"])
    values = np.frombuffer(path.read_bytes(), dtype="<f4").reshape(shape).astype(np.float32)
    return Spectrogram(values, d=(meta["frames"] + 1) // 2, scale=meta["scale"])
