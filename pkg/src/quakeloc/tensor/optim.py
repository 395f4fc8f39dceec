"""Adam with epoch-indexed step decay of the learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autograd import Parameter


def learning_rate(epoch: int, base_lr: float = 1e-5, decay_factor: float = 0.9, decay_every: int = 10) -> float:
    """base_lr * decay_factor ** floor(epoch / decay_every)."""
    if decay_every < 1:
        raise ValueError("decay_every must be >= 1")
    return base_lr * decay_factor ** (epoch // decay_every)


@dataclass
class AdamState:
    base_lr: float = 1e-5
    decay_factor: float = 0.9
    decay_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self, epoch: int) -> float:
        return learning_rate(epoch, self.base_lr, self.decay_factor, self.decay_every)


def adam_step(params: Sequence[Parameter], state: AdamState, epoch: int) -> float:
    """One bias-corrected Adam update of every trainable parameter holding a gradient.

    Frozen parameters are never touched. Returns the learning rate used.
    """
    lr = state.lr(epoch)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p in params:
        if not p.trainable or p.grad is None:
            continue
        g = p.grad
        key = p.name or f"#{id(p)}"
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p.data)
            state.v[key] = np.zeros_like(p.data)
        v = state.v[key]
        if m.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match moments {m.shape} for {key}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return lr
