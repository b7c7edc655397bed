"""Differentiable operations: the closed set needed by the accent CNN."""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import kernels
from .tensor import Tensor


def _check_ndim(t: Tensor, ndim: int, what: str) -> None:
    if t.data.ndim != ndim:
        raise ShapeError(f"{what} expects a {ndim}-D input, got shape {t.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1 (output keeps H and W)."""
    _check_ndim(x, 4, "conv2d")
    _check_ndim(weight, 4, "conv2d weight")
    if weight.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d supports 3x3 kernels only, got {weight.shape[2:]}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d bias shape {bias.shape} != ({weight.shape[0]},)")
    out = kernels.conv3x3_forward(x.data, weight.data, bias.data)

    def vjp(g):
        gx, gw, gb = kernels.conv3x3_backward(x.data, weight.data, g)
        return gx, gw, gb

    return Tensor.from_op(out, "conv2d", (x, weight, bias), vjp)


def relu(x: Tensor) -> Tensor:
    active = x.data > 0
    return Tensor.from_op(np.where(active, x.data, 0.0), "relu", (x,), lambda g: (g * active,))


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pool, stride 2; odd trailing rows/columns are dropped.

    Ties go to the first cell in row-major order within the window.
    """
    _check_ndim(x, 4, "maxpool2d")
    if x.shape[2] < 2 or x.shape[3] < 2:
        raise ShapeError(f"maxpool2d needs spatial dims >= 2, got {x.shape[2:]}")
    out, arg = kernels.maxpool2_forward(x.data)
    in_shape = x.shape
    return Tensor.from_op(out, "maxpool2d", (x,),
                          lambda g: (kernels.maxpool2_backward(g, arg, in_shape),))


def dropout(x: Tensor, keep: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; the identity at inference or when ``keep == 1``."""
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"keep probability must be in (0, 1], got {keep}")
    if not training or keep == 1.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an RNG stream")
    scale = (rng.random(x.shape) < keep) / keep
    return Tensor.from_op(x.data * scale, "dropout", (x,), lambda g: (g * scale,))


def flatten(x: Tensor) -> Tensor:
    shape = x.shape
    return Tensor.from_op(x.data.reshape(shape[0], -1), "flatten", (x,),
                          lambda g: (g.reshape(shape),))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` of shape (out, in)."""
    _check_ndim(x, 2, "linear")
    if weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear shape mismatch: input {x.shape}, weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T + bias.data

    def vjp(g):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return Tensor.from_op(out, "linear", (x, weight, bias), vjp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    _check_ndim(logits, 2, "softmax_cross_entropy")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    logp = log_softmax(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def vjp(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (g * d / n,)

    return Tensor.from_op(np.asarray(loss), "softmax_xent", (logits,), vjp)


# -- small helpers used to seed backward passes and in tests ----------------

def select(x: Tensor, index: int) -> Tensor:
    """Column ``index`` of a 2-D tensor, e.g. one class logit per sample."""
    _check_ndim(x, 2, "select")
    if not 0 <= index < x.shape[1]:
        raise ValueError(f"index {index} out of range for {x.shape[1]} columns")

    def vjp(g):
        out = np.zeros_like(x.data)
        out[:, index] = g
        return (out,)

    return Tensor.from_op(x.data[:, index].copy(), "select", (x,), vjp)


def total(x: Tensor) -> Tensor:
    return Tensor.from_op(np.asarray(x.data.sum()), "sum", (x,),
                          lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    return Tensor.from_op(a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data))
