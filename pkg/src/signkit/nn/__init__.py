"""Minimal dense-tensor layer set with forward passes, analytic backward
passes, parameter counting, and an Adam optimizer with step decay.

Arrays are plain numpy ndarrays (float64 by default, float32 selectable);
batch axes lead: conv inputs are (N, H, W, C), recurrent inputs (N, T, D).
"""

from .layers import (
    BatchNorm,
    BiLSTM,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LSTM,
    MaxPool2D,
    TimeFlatten,
    glorot_uniform,
    softmax,
    softmax_xent,
)
from .optim import AdamState, adam_step, lr_at_epoch
from .gradcheck import finite_difference, grad_check, max_relative_error

__all__ = [
    "AdamState",
    "BatchNorm",
    "BiLSTM",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "LSTM",
    "Layer",
    "MaxPool2D",
    "TimeFlatten",
    "adam_step",
    "finite_difference",
    "glorot_uniform",
    "grad_check",
    "lr_at_epoch",
    "max_relative_error",
    "softmax",
    "softmax_xent",
]
