"""Differentiable layer kernels.

Image-like tensors are channels-last: (N, H, W, C). Sequences are (N, T, C).
Convolutions are cross-correlations (no kernel flip).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, make


def _pair(v) -> tuple[int, int]:
    return (v, v) if isinstance(v, int) else (int(v[0]), int(v[1]))


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    # (N, Ho, Wo, C, kh, kw) -> rows ordered (kh, kw, C) to match the weight layout
    n, c = xp.shape[0], xp.shape[3]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, pad=0) -> Tensor:
    """2-D cross-correlation. x: (N, H, W, Cin), weight: (Cout, kh, kw, Cin)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, h, w, cin = x.shape
    cout, kh, kw, wcin = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ValueError(f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
    ho, wo = conv_output_size(h, kh, sh, ph), conv_output_size(w, kw, sw, pw)

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x.data
    wmat = weight.data.reshape(cout, -1)
    out = _im2col(xp, kh, kw, sh, sw, ho, wo) @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, cout)

    def back(g):
        g2 = g.reshape(-1, cout)
        gw = gb = gx = None
        if weight.requires_grad:
            # columns are rebuilt rather than kept alive between passes
            gw = (g2.T @ _im2col(xp, kh, kw, sh, sw, ho, wo)).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(n, ho, wo, kh, kw, cin)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += gcols[:, :, :, i, j]
            gx = gxp[:, ph : ph + h, pw : pw + w]
        return (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out, parents, back)


def conv1d_causal(x: Tensor, weight: Tensor, bias: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution. x: (N, T, Cin), weight: (Cout, k, Cin).

    Tap j reads x[t - (k - 1 - j) * dilation]; the sequence is left-padded with
    zeros so the output keeps length T and never looks ahead.
    """
    if x.ndim != 3 or weight.ndim != 3:
        raise ValueError(f"conv1d_causal expects 3-D input and weight, got {x.shape} and {weight.shape}")
    if dilation < 1:
        raise ValueError("dilation must be a positive integer")
    n, t, cin = x.shape
    cout, k, wcin = weight.shape
    if wcin != cin:
        raise ValueError(f"conv1d channel mismatch: input has {cin}, weight expects {wcin}")
    left = (k - 1) * dilation
    xp = np.pad(x.data, ((0, 0), (left, 0), (0, 0))) if left else x.data

    def cols():
        return np.stack([xp[:, j * dilation : j * dilation + t] for j in range(k)], axis=2).reshape(n * t, k * cin)

    wmat = weight.data.reshape(cout, -1)
    out = cols() @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, t, cout)

    def back(g):
        g2 = g.reshape(-1, cout)
        gw = gb = gx = None
        if weight.requires_grad:
            gw = (g2.T @ cols()).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(n, t, k, cin)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for j in range(k):
                gxp[:, j * dilation : j * dilation + t] += gcols[:, :, j]
            gx = gxp[:, left:]
        return (gx, gw, gb)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out, parents, back)


def maxpool2d(x: Tensor, extent=3, stride=1, pad=0) -> Tensor:
    """Windowed maximum over (H, W) of an (N, H, W, C) tensor; padding never wins.

    The gradient goes to the first maximal element of each window.
    """
    if x.ndim != 4:
        raise ValueError(f"maxpool2d expects (N, H, W, C), got {x.shape}")
    n, h, w, c = x.shape
    eh, ew = _pair(extent)
    sh, sw = _pair(stride)
    ph, pw = _pair(pad)
    if eh > h + 2 * ph or ew > w + 2 * pw:
        raise ValueError(f"pool extent {eh}x{ew} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
    ho, wo = conv_output_size(h, eh, sh, ph), conv_output_size(w, ew, sw, pw)
    xp = x.data
    if ph or pw:
        xp = np.pad(xp, ((0, 0), (ph, ph), (pw, pw), (0, 0)), constant_values=-np.inf)
    win = sliding_window_view(xp, (eh, ew), axis=(1, 2))[:, : (ho - 1) * sh + 1 : sh, : (wo - 1) * sw + 1 : sw]
    win = win.reshape(n, ho, wo, c, eh * ew)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i in range(eh):
            for j in range(ew):
                hit = arg == i * ew + j
                if hit.any():
                    gxp[:, i : i + (ho - 1) * sh + 1 : sh, j : j + (wo - 1) * sw + 1 : sw] += np.where(hit, g, 0)
        return (gxp[:, ph : ph + h, pw : pw + w],)

    return make(np.ascontiguousarray(out), (x,), back)


def maxpool1d(x: Tensor, extent: int = 2, stride: int = 2) -> Tensor:
    """Temporal max pooling of an (N, T, C) sequence; output length floor((T - extent) / stride) + 1."""
    n, t, c = x.shape
    out = maxpool2d(x.reshape(n, t, 1, c), (extent, 1), (stride, 1))
    return out.reshape(n, out.shape[1], c)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
              training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Batch normalisation over every axis but the last (channel) one.

    In training mode the running moments are updated in place (unbiased
    variance, exponential average with ``momentum``).
    """
    axes = tuple(range(x.ndim - 1))
    if training:
        count = int(np.prod([x.shape[a] for a in axes]))
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        unbiased = var * count / max(count - 1, 1)
        running_var *= 1 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean.astype(x.dtype), running_var.astype(x.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = xhat * gamma.data + beta.data

    def back(g):
        ggamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data
            if training:
                gx = inv_std * (gxhat - gxhat.mean(axis=axes) - xhat * (gxhat * xhat).mean(axis=axes))
            else:
                gx = gxhat * inv_std
        return (gx, ggamma, gbeta)

    return make(out.astype(x.dtype, copy=False), (x, gamma, beta), back)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map of (N, Fin) by weight (Fin, Fout)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ValueError(f"dense shape mismatch: input {x.shape}, weight {weight.shape}")
    out = x @ weight
    return out if bias is None else out + bias


def relu(x: Tensor) -> Tensor:
    """max(x, 0); NaN passes through so divergence stays visible."""
    mask = x.data > 0
    out = np.where(x.data <= 0, 0, x.data).astype(x.dtype, copy=False)
    return make(out, (x,), lambda g: (g * mask,))


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1 / (1 - rate); identity outside training."""
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return make(x.data * keep, (x,), lambda g: (g * keep,))


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over all axes between batch and channel."""
    return x.mean(axis=tuple(range(1, x.ndim - 1)))


def _check_pair(pred: Tensor, target) -> np.ndarray:
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"loss shape mismatch: prediction {pred.shape}, target {t.shape}")
    return t


def mse_loss(pred: Tensor, target) -> Tensor:
    diff = pred.data - _check_pair(pred, target)
    scale = 2.0 / diff.size
    return make(np.mean(diff**2, dtype=pred.dtype), (pred,), lambda g: (g * scale * diff,))


def mae_loss(pred: Tensor, target) -> Tensor:
    diff = pred.data - _check_pair(pred, target)
    sign = np.sign(diff)
    scale = 1.0 / diff.size
    return make(np.mean(np.abs(diff), dtype=pred.dtype), (pred,), lambda g: (g * scale * sign,))
