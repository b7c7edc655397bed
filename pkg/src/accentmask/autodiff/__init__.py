"""Minimal reverse-mode differentiation for the accent CNN."""
from .kernels import BACKEND
from .ops import (conv2d, dropout, flatten, linear, log_softmax, maxpool2d, mul, relu, select,
                  softmax, softmax_cross_entropy, total)
from .optim import AdamState, adam_step
from .tensor import Tensor, grad, topological_order

__all__ = [
    "BACKEND", "Tensor", "grad", "topological_order", "conv2d", "relu", "maxpool2d", "dropout",
    "flatten", "linear", "softmax_cross_entropy", "softmax", "log_softmax", "select", "total",
    "mul", "AdamState", "adam_step",
]
