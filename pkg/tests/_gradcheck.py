"""Central finite-difference gradient checking in float64."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from quakeloc.tensor import Tensor

# Gradients below this magnitude are compared on an absolute scale: finite
# differences of an exactly-zero gradient still return ~1e-10 of roundoff.
FLOOR = 1e-5


def check_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor], rng: np.random.Generator,
                    n_coords: int = 6, h: float = 1e-6) -> float:
    """Worst relative error between backprop and central differences.

    ``loss_fn`` must rebuild the graph from the current ``.data`` of
    ``tensors`` and return a scalar. At least ``n_coords`` coordinates per
    tensor are probed (all of them for smaller tensors).
    """
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        count = min(n_coords, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            saved = flat[idx]
            flat[idx] = saved + h
            up = float(loss_fn().data)
            flat[idx] = saved - h
            down = float(loss_fn().data)
            flat[idx] = saved
            numeric = (up - down) / (2 * h)
            exact = float(grad.reshape(-1)[idx])
            err = abs(numeric - exact) / max(abs(numeric), abs(exact), FLOOR)
            worst = max(worst, err)
    return worst


def probe(shape, rng) -> np.ndarray:
    """Fixed random weights for turning a tensor output into a scalar loss."""
    return rng.standard_normal(shape)


def jitter_offsets(module, rng: np.random.Generator, scale: float = 0.1) -> None:
    """Move zero-initialised biases off ReLU kinks before a check.

    With zero biases an all-zero input patch yields a pre-activation of exactly
    0, where ReLU has no derivative and central differences report the mean of
    the one-sided slopes.
    """
    for name, p in module.named_parameters():
        if name.endswith(("bias", "beta")):
            p.data = p.data + rng.normal(0.0, scale, p.shape).astype(p.dtype)
