"""Grad-CAM and Grad-CAM++ saliency over the classifier's last conv features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gridio
from .autodiff import grad, select
from .classifier import ClassifierModel
from .errors import FormatError, ShapeError, ValidationError
from .frontend import Spectrogram

METHODS = ("gradcam", "gradcampp")


@dataclass
class SaliencyMap:
    scores: np.ndarray
    target: int | None = None
    method: str | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape


def upsample_bilinear(grid, size: tuple[int, int]) -> np.ndarray:
    """Align-corners bilinear interpolation of a 2-D grid to ``size``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    rows, cols = int(size[0]), int(size[1])
    if rows < 1 or cols < 1:
        raise ValueError(f"target size must be positive, got {size}")
    return _interp_axis(_interp_axis(grid, rows, axis=0), cols, axis=1)


def _interp_axis(a: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = a.shape[axis]
    if n_in == 1 or n_out == 1:
        return np.repeat(np.take(a, [0], axis=axis), n_out, axis=axis)
    pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
    frac = pos - lo
    shape = [1, 1]
    shape[axis] = n_out
    frac = frac.reshape(shape)
    return np.take(a, lo, axis=axis) * (1.0 - frac) + np.take(a, lo + 1, axis=axis) * frac


def minmax_normalize(a: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant map (including all zeros) becomes all zeros."""
    lo, hi = float(a.min()), float(a.max())
    if not hi > lo:
        return np.zeros_like(a, dtype=np.float64)
    return np.clip((a - lo) / (hi - lo), 0.0, 1.0)


def feature_gradients(model: ClassifierModel, spec, target="predicted"):
    """Forward pass (dropout off) and gradient of the target logit w.r.t. the
    last conv features.

    Returns ``(activations, gradients, target, logits)`` with activations and
    gradients of shape (C, h, w).
    """
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    if values.shape != model.config.input_shape[1:]:
        raise ShapeError(f"spectrogram shape {values.shape} != model input {model.config.input_shape[1:]}")
    logits, features = model.forward(values[None, None].astype(np.float64), training=False)
    k = model.config.n_classes
    if isinstance(target, str):
        if target != "predicted":
            raise ValueError(f"target must be 'predicted' or a class index, got {target!r}")
        target = int(np.argmax(logits.data[0]))
    elif not 0 <= int(target) < k:
        raise ValueError(f"target class {target} out of range for {k} classes")
    target = int(target)
    (g,) = grad(select(logits, target), [features], seed=np.ones(1))
    return features.data[0], g[0], target, logits.data[0]


def gradcam_weights(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    return gradients.mean(axis=(1, 2))


def gradcampp_weights(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Per-location alphas under the exp(score) convention, where the second and
    third derivatives reduce to powers of the first."""
    g2 = gradients ** 2
    g3 = g2 * gradients
    denom = 2.0 * g2 + activations.sum(axis=(1, 2), keepdims=True) * g3
    safe = np.where(denom != 0.0, denom, 1.0)
    alpha = np.where(denom != 0.0, g2 / safe, 0.0)
    return (alpha * np.maximum(gradients, 0.0)).sum(axis=(1, 2))


def raw_map(activations: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """ReLU of the weighted channel sum, at feature resolution."""
    return np.maximum(np.tensordot(weights, activations, axes=1), 0.0)


def _saliency(model, spec, target, method) -> SaliencyMap:
    acts, grads, target, _ = feature_gradients(model, spec, target)
    weigh = gradcam_weights if method == "gradcam" else gradcampp_weights
    cam = raw_map(acts, weigh(acts, grads))
    scores = minmax_normalize(upsample_bilinear(cam, model.config.input_shape[1:]))
    return SaliencyMap(scores, target, method)


def grad_cam(model: ClassifierModel, spec, target="predicted") -> SaliencyMap:
    return _saliency(model, spec, target, "gradcam")


def grad_cam_pp(model: ClassifierModel, spec, target="predicted") -> SaliencyMap:
    return _saliency(model, spec, target, "gradcampp")


def compute(model: ClassifierModel, spec, method: str = "gradcam", target="predicted") -> SaliencyMap:
    if method not in METHODS:
        raise ValueError(f"unknown saliency method {method!r}; choose from {METHODS}")
    return _saliency(model, spec, target, method)


def write_saliency(sal: SaliencyMap, sink) -> None:
    gridio.write_bytes(sink, gridio.encode_grid(b"SMAP", sal.scores))


def read_saliency(source) -> SaliencyMap:
    scores = gridio.decode_grid(b"SMAP", gridio.read_bytes(source))
    if not np.all(np.isfinite(scores)) or scores.min(initial=0.0) < 0.0 or scores.max(initial=0.0) > 1.0:
        raise ValidationError("saliency scores outside [0, 1]")
    return SaliencyMap(scores.astype(np.float64))


__all__ = ["SaliencyMap", "grad_cam", "grad_cam_pp", "compute", "upsample_bilinear",
           "minmax_normalize", "write_saliency", "read_saliency", "feature_gradients",
           "gradcam_weights", "gradcampp_weights", "raw_map", "FormatError"]
