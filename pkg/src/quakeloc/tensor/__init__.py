"""Dense numpy tensors with reverse-mode autodiff, layer kernels and Adam."""

from .autograd import Parameter, Tensor, concat, no_grad, tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (
    batchnorm,
    conv1d_causal,
    conv2d,
    dense,
    dropout,
    global_avg_pool,
    mae_loss,
    maxpool1d,
    maxpool2d,
    mse_loss,
    relu,
)
from .nn import BatchNorm, CausalConv1d, Conv2d, Dense, Module
from .optim import AdamState, adam_step, learning_rate

__all__ = [
    "AdamState", "BatchNorm", "CausalConv1d", "Conv2d", "Dense", "Module", "Parameter", "Tensor",
    "adam_step", "batchnorm", "concat", "conv1d_causal", "conv2d", "dense", "dropout",
    "global_avg_pool", "learning_rate", "load_checkpoint", "mae_loss", "maxpool1d", "maxpool2d",
    "mse_loss", "no_grad", "relu", "save_checkpoint", "tensor",
]
