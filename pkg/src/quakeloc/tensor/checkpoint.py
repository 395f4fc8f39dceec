"""Checkpoint files: a JSON index next to a little-endian float32 blob.

``<path>.json`` holds ``{"tensors": {name: {"shape", "dtype", "offset"}}, ...}``
plus free-form metadata; ``<path>.bin`` holds the concatenated arrays.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import AdamState


def _paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    return path.with_name(path.name + ".json"), path.with_name(path.name + ".bin")


def save_checkpoint(path: str | Path, state: dict[str, np.ndarray], optimizer: AdamState | None = None,
                    epoch: int | None = None, meta: dict | None = None) -> None:
    arrays = dict(state)
    header = {"format": "quakeloc-ckpt", "version": 1, "epoch": epoch, "meta": meta or {}}
    if optimizer is not None:
        header["optimizer"] = {
            "base_lr": optimizer.base_lr, "decay_factor": optimizer.decay_factor,
            "decay_every": optimizer.decay_every, "beta1": optimizer.beta1,
            "beta2": optimizer.beta2, "eps": optimizer.eps, "step": optimizer.step,
        }
        arrays.update({f"adam.m/{k}": v for k, v in optimizer.m.items()})
        arrays.update({f"adam.v/{k}": v for k, v in optimizer.v.items()})
    index = {}
    blobs = []
    offset = 0
    for name in sorted(arrays):
        raw = np.ascontiguousarray(arrays[name], dtype="<f4").tobytes()
        index[name] = {"shape": list(np.shape(arrays[name])), "dtype": "float32", "offset": offset}
        blobs.append(raw)
        offset += len(raw)
    header["tensors"] = index
    json_path, bin_path = _paths(path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(b"".join(blobs))
    json_path.write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], AdamState | None, dict]:
    """Returns (model state, optimizer state or None, header)."""
    json_path, bin_path = _paths(path)
    header = json.loads(json_path.read_text())
    blob = bin_path.read_bytes()
    state: dict[str, np.ndarray] = {}
    moments: dict[str, dict[str, np.ndarray]] = {"adam.m": {}, "adam.v": {}}
    for name, info in header["tensors"].items():
        count = int(np.prod(info["shape"])) if info["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=info["offset"])
        arr = arr.reshape(info["shape"]).astype(np.float32)
        kind, _, key = name.partition("/")
        if kind in moments:
            moments[kind][key] = arr
        else:
            state[name] = arr
    optimizer = None
    if "optimizer" in header:
        optimizer = AdamState(**header["optimizer"], m=moments["adam.m"], v=moments["adam.v"])
    return state, optimizer, header
