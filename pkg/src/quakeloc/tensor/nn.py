"""Minimal module system: parameter registry, train/eval mode, state dicts."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as F
from .autograd import DEFAULT_DTYPE, Parameter, Tensor


class Module:
    training: bool = True

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{key}.{i}", v

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield name, value
            else:
                yield from value.named_parameters(name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, value in getattr(self, "_buffers", {}).items():
            yield f"{prefix}{key}", value
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{key}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def assign_names(self) -> None:
        for name, p in self.named_parameters():
            p.name = name

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {f"param/{n}": p.data.copy() for n, p in self.named_parameters()}
        state.update({f"buffer/{n}": b.copy() for n, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for n, p in self.named_parameters():
            value = state[f"param/{n}"]
            if value.shape != p.shape:
                raise ValueError(f"shape mismatch for {n}: {value.shape} vs {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
        for n, b in self.named_buffers():
            b[...] = state[f"buffer/{n}"]

    def astype(self, dtype) -> "Module":
        """Cast parameters and buffers in place (float64 for gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for m in self.modules():
            buffers = getattr(m, "_buffers", None)
            if buffers:
                for k in list(buffers):
                    buffers[k] = buffers[k].astype(dtype)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def kaiming_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(DEFAULT_DTYPE)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel, rng: np.random.Generator, stride=1, pad=0):
        kh, kw = F._pair(kernel)
        self.stride, self.pad = stride, pad
        self.weight = Parameter(kaiming_uniform(rng, (cout, kh, kw, cin), kh * kw * cin))
        self.bias = Parameter(np.zeros(cout, dtype=DEFAULT_DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.pad)


class CausalConv1d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, dilation: int, rng: np.random.Generator):
        self.dilation = dilation
        self.weight = Parameter(kaiming_uniform(rng, (cout, kernel, cin), kernel * cin))
        self.bias = Parameter(np.zeros(cout, dtype=DEFAULT_DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d_causal(x, self.weight, self.bias, self.dilation)


class Dense(Module):
    def __init__(self, fin: int, fout: int, rng: np.random.Generator):
        self.weight = Parameter(kaiming_uniform(rng, (fin, fout), fin))
        self.bias = Parameter(np.zeros(fout, dtype=DEFAULT_DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        return F.dense(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels, dtype=DEFAULT_DTYPE))
        self.beta = Parameter(np.zeros(channels, dtype=DEFAULT_DTYPE))
        self._buffers = {
            "running_mean": np.zeros(channels, dtype=DEFAULT_DTYPE),
            "running_var": np.ones(channels, dtype=DEFAULT_DTYPE),
        }

    def forward(self, x: Tensor) -> Tensor:
        return F.batchnorm(
            x, self.gamma, self.beta,
            self._buffers["running_mean"], self._buffers["running_var"],
            self.training, self.momentum, self.eps,
        )
