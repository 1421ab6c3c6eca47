from . import ops
from .module import Module, parameter
from .ops import (
    concat,
    conv2d,
    cross_entropy,
    embedding,
    gelu,
    group_norm,
    layer_norm,
    linear,
    matmul,
    mse_loss,
    silu,
    softmax,
    upsample2x,
)
from .optim import AdamW, OptimizerState, adamw_step
from .tensor import Tape, Tensor, backward, no_grad, precision

__all__ = [
    "AdamW",
    "Module",
    "OptimizerState",
    "Tape",
    "Tensor",
    "adamw_step",
    "backward",
    "concat",
    "conv2d",
    "cross_entropy",
    "embedding",
    "gelu",
    "group_norm",
    "layer_norm",
    "linear",
    "matmul",
    "mse_loss",
    "no_grad",
    "ops",
    "parameter",
    "precision",
    "silu",
    "softmax",
    "upsample2x",
]
