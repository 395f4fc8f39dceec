"""Residual and temporal-convolutional localisation models.

Both encoders reduce a record to a feature vector; the decision head appends
the station latitude/longitude, then dense(hidden) -> ReLU -> dropout ->
dense(2). Outputs are epicenter offsets (dlat, dlon) in degrees relative to
the station.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import spectrogram as sg
from ._rng import stream
from .records import EventMeta, StationMeta
from .tensor import functional as F
from .tensor.autograd import Tensor, concat, no_grad
from .tensor.nn import BatchNorm, CausalConv1d, Conv2d, Dense, Module

GAL_PER_G = 981.0
DB_SCALE = 100.0
ENCODERS = ("resnet", "tcn")
DOMAINS = ("time", "frequency")


@dataclass(frozen=True)
class ModelConfig:
    encoder_kind: str = "resnet"
    input_domain: str = "frequency"
    d: int = 30
    dropout_rate: float = 0.5
    head_hidden: int = 128
    seed: int = 0
    resnet_stem: int = 32
    resnet_widths: tuple[int, ...] = (32, 64, 128)
    tcn_channels: int = 32
    tcn_kernel: int = 3
    tcn_dilations: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    # station (lat, lon) enter the head as (coord - station_ref) / station_scale_deg
    station_ref: tuple[float, float] = (39.0, 35.0)
    station_scale_deg: float = 5.0

    def __post_init__(self):
        if self.encoder_kind not in ENCODERS:
            raise ValueError(f"encoder_kind must be one of {ENCODERS}")
        if self.input_domain not in DOMAINS:
            raise ValueError(f"input_domain must be one of {DOMAINS}")
        if self.d < 1:
            raise ValueError("d must be a positive number of seconds")
        object.__setattr__(self, "resnet_widths", tuple(self.resnet_widths))
        object.__setattr__(self, "tcn_dilations", tuple(self.tcn_dilations))
        object.__setattr__(self, "station_ref", tuple(float(v) for v in self.station_ref))
        if not self.station_scale_deg > 0:
            raise ValueError("station_scale_deg must be > 0")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        if self.input_domain == "time":
            return (self.d * 100, 3, 1)
        return (2 * self.d - 1, sg.N_BINS, 3)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["resnet_widths"] = list(self.resnet_widths)
        out["tcn_dilations"] = list(self.tcn_dilations)
        out["station_ref"] = list(self.station_ref)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def make_ground_truth(event: EventMeta, station: StationMeta) -> tuple[float, float]:
    """Epicenter minus station coordinates, in degrees."""
    return (event.epicenter_lat - station.latitude, event.epicenter_lon - station.longitude)


def prepare_input(window: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Model input for one (3, d*100) window in the layout of ``config.input_shape``."""
    window = np.asarray(window, dtype=np.float32)
    if window.shape != (3, config.d * 100):
        raise ValueError(f"window shape {window.shape} does not match d={config.d}")
    if config.input_domain == "time":
        return (window.T / GAL_PER_G)[:, :, None].astype(np.float32)
    spec = sg.to_db(sg.spectrogram3(window)).values  # (bins, frames, 3)
    return (spec.transpose(1, 0, 2) / DB_SCALE).astype(np.float32)


def prepare_batch(windows: Sequence[np.ndarray], config: ModelConfig) -> np.ndarray:
    if not len(windows):
        return np.zeros((0,) + config.input_shape, dtype=np.float32)
    return np.stack([prepare_input(w, config) for w in windows])


# --- residual encoder -------------------------------------------------------

_POOL = dict(extent=3, stride=(1, 2), pad=1)


class ResidualBlock(Module):
    def __init__(self, cin: int, cout: int, rng: np.random.Generator):
        self.adapt = Conv2d(cin, cout, 1, rng)
        self.conv3x3 = Conv2d(cout, cout, 3, rng, pad=1)
        self.conv7x3 = Conv2d(cout, cout, (7, 3), rng, pad=(3, 1))
        self.norm = BatchNorm(cout)
        self.project = Conv2d(cin, cout, 1, rng) if cin != cout else None

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.adapt(x))
        h = F.relu(self.conv3x3(h))
        h = self.conv7x3(h)
        skip = x if self.project is None else self.project(x)
        h = F.relu(self.norm(h + skip))
        return F.maxpool2d(h, **_POOL)


class ResNetEncoder(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        cin = config.input_shape[-1]
        stem = config.resnet_stem
        self.stem1 = Conv2d(cin, stem, (7, 3), rng, pad=(3, 1))
        self.stem2 = Conv2d(stem, stem, (7, 3), rng, pad=(3, 1))
        blocks = []
        width_in = stem
        for width in config.resnet_widths:
            blocks.append(ResidualBlock(width_in, width, rng))
            width_in = width
        self.blocks = blocks
        self.out_features = config.resnet_widths[-1]

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.stem1(x))
        h = F.relu(self.stem2(h))
        h = F.maxpool2d(h, **_POOL)
        for block in self.blocks:
            h = block(h)
        return F.global_avg_pool(h)


# --- temporal convolutional encoder -----------------------------------------


class TCNBlock(Module):
    def __init__(self, cin: int, cout: int, kernel: int, dilation: int, rng: np.random.Generator):
        self.conv1 = CausalConv1d(cin, cout, kernel, dilation, rng)
        self.conv2 = CausalConv1d(cout, cout, kernel, dilation, rng)
        self.project = CausalConv1d(cin, cout, 1, 1, rng) if cin != cout else None

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.conv1(x))
        h = F.relu(self.conv2(h))
        skip = x if self.project is None else self.project(x)
        return F.relu(h + skip)


class TCNEncoder(Module):
    N_POOLED_BLOCKS = 3

    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        t, a, b = config.input_shape
        self.features = a * b
        self.pooled = config.input_domain == "frequency"
        blocks = []
        cin = self.features
        for dilation in config.tcn_dilations:
            blocks.append(TCNBlock(cin, config.tcn_channels, config.tcn_kernel, dilation, rng))
            cin = config.tcn_channels
        self.blocks = blocks
        self.out_features = config.tcn_channels

    def sequence(self, x: Tensor, pool: bool | None = None) -> Tensor:
        """Block-stack output (N, T', C) before global pooling."""
        pool = self.pooled if pool is None else pool
        h = x.reshape(x.shape[0], x.shape[1], self.features)
        for i, block in enumerate(self.blocks):
            h = block(h)
            if pool and i < self.N_POOLED_BLOCKS:
                h = F.maxpool1d(h, 2, 2)
        return h

    def forward(self, x: Tensor) -> Tensor:
        return F.global_avg_pool(self.sequence(x))


# --- full model -------------------------------------------------------------


class DecisionHead(Module):
    def __init__(self, n_features: int, hidden: int, dropout_rate: float, rng: np.random.Generator):
        self.fc1 = Dense(n_features + 2, hidden, rng)
        self.fc2 = Dense(hidden, 2, rng)
        self.dropout_rate = dropout_rate

    def forward(self, features: Tensor, stations: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        h = F.relu(self.fc1(concat([features, stations], axis=1)))
        h = F.dropout(h, self.dropout_rate, self.training, rng)
        return self.fc2(h)


class LocalizationModel(Module):
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = stream(config.seed, "init")
        if config.encoder_kind == "resnet":
            self.encoder = ResNetEncoder(config, rng)
        else:
            self.encoder = TCNEncoder(config, rng)
        self.head = DecisionHead(self.encoder.out_features, config.head_hidden, config.dropout_rate, rng)
        self.assign_names()

    def forward(self, x, stations, rng: np.random.Generator | None = None) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        stations = stations if isinstance(stations, Tensor) else Tensor(np.asarray(stations, dtype=x.dtype))
        if x.shape[1:] != self.config.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match model input {self.config.input_shape}")
        if stations.shape != (x.shape[0], 2):
            raise ValueError(f"station coordinates must be ({x.shape[0]}, 2), got {stations.shape}")
        ref = np.asarray(self.config.station_ref, dtype=x.dtype)
        stations = (stations - ref) * (1.0 / self.config.station_scale_deg)
        return self.head(self.encoder(x), stations, rng)

    def set_frozen(self, prefix: str, frozen: bool = True) -> None:
        for name, p in self.named_parameters():
            if name.startswith(prefix + "."):
                p.trainable = not frozen


def build_model(config: ModelConfig) -> LocalizationModel:
    return LocalizationModel(config)


def predict(model: LocalizationModel, inputs: np.ndarray, stations: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode predictions (N, 2) in batches, without recording a graph."""
    modes = [(m, m.training) for m in model.modules()]
    model.eval()
    out = []
    try:
        with no_grad():
            for i in range(0, len(inputs), batch_size):
                out.append(model(inputs[i : i + batch_size], stations[i : i + batch_size]).data)
    finally:
        for m, mode in modes:
            m.training = mode
    if not out:
        return np.zeros((0, 2), dtype=np.float32)
    return np.concatenate(out)
