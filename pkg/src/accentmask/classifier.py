"""CNN accent classifier: four 3x3 conv stages, two fully connected layers.

Layer stack for an input of shape (N, 1, H, W)::

    [conv3x3(c) -> relu -> maxpool2x2 -> dropout] for c in 32, 64, 128, 256
    flatten -> linear(128) -> relu -> dropout -> linear(n_classes)

The output of the last pooling stage (before its dropout) is the feature map
that saliency methods differentiate against.
"""
from __future__ import annotations

import hashlib
import logging
import struct
import time
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import gridio, rng
from .autodiff import (AdamState, Tensor, adam_step, conv2d, dropout, flatten, grad, linear,
                       maxpool2d, relu, select, softmax, softmax_cross_entropy)
from .errors import FormatError, ShapeError, StateError, TrainingError, ValidationError
from .frontend import N_FRAMES, N_MELS, Spectrogram

log = logging.getLogger(__name__)

CONV_CHANNELS = (32, 64, 128, 256)
CHECKPOINT_MAGIC = b"ACMK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ClassifierConfig:
    n_classes: int
    conv_channels: tuple[int, ...] = CONV_CHANNELS
    kernel: int = 3
    fc_hidden: int = 128
    dropout_conv: float = 0.25
    dropout_fc: float = 0.5
    input_shape: tuple[int, int, int] = (1, N_MELS, N_FRAMES)
    pool_after: tuple[bool, ...] = (True, True, True, True)

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "pool_after", tuple(bool(p) for p in self.pool_after))
        if self.conv_channels != CONV_CHANNELS:
            raise ValidationError(f"conv_channels are fixed to {CONV_CHANNELS}")
        if self.kernel != 3:
            raise ValidationError("only 3x3 kernels are supported")
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")
        if len(self.pool_after) != len(self.conv_channels):
            raise ValidationError("pool_after needs one flag per conv stage")
        for p in (self.dropout_conv, self.dropout_fc):
            if not 0.0 <= p < 1.0:
                raise ValidationError(f"dropout probability must be in [0, 1), got {p}")
        if len(self.input_shape) != 3 or self.input_shape[0] != 1:
            raise ValidationError(f"input_shape must be (1, n_mels, n_frames), got {self.input_shape}")
        self.feature_shape  # validates that every pooled dim stays >= 1

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        """Shape (C, H, W) of the last conv stage output, i.e. the saliency features."""
        _, h, w = self.input_shape
        for pooled in self.pool_after:
            if pooled:
                if h < 2 or w < 2:
                    raise ValidationError(f"input {self.input_shape} too small for the pooling stack")
                h, w = h // 2, w // 2
        return self.conv_channels[-1], h, w

    @property
    def flatten_size(self) -> int:
        c, h, w = self.feature_shape
        return c * h * w

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c_in = self.input_shape[0]
        for i, c_out in enumerate(self.conv_channels, start=1):
            shapes[f"conv{i}.weight"] = (c_out, c_in, 3, 3)
            shapes[f"conv{i}.bias"] = (c_out,)
            c_in = c_out
        shapes["fc1.weight"] = (self.fc_hidden, self.flatten_size)
        shapes["fc1.bias"] = (self.fc_hidden,)
        shapes["fc2.weight"] = (self.n_classes, self.fc_hidden)
        shapes["fc2.bias"] = (self.n_classes,)
        return shapes


class ClassifierModel:
    def __init__(self, config: ClassifierConfig, params: dict[str, Tensor], labels: Sequence[str]):
        labels = list(labels)
        if len(labels) != config.n_classes:
            raise ValidationError(f"{len(labels)} labels for {config.n_classes} classes")
        if len(set(labels)) != len(labels):
            raise ValidationError("label vocabulary contains duplicates")
        expected = config.param_shapes()
        if list(params) != list(expected):
            raise ValidationError(f"parameter names {list(params)} != {list(expected)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"{name}: shape {params[name].shape} != expected {shape}")
        self.config = config
        self.params = params
        self.labels = labels
        self._last_forward: tuple[Tensor, Tensor] | None = None

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"label {label!r} not in model vocabulary {self.labels}") from None

    def forward(self, x, training: bool = False, rng_stream: np.random.Generator | None = None):
        """Return ``(logits, features)`` tensors for a batch ``x`` of shape (N, 1, H, W)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[:, None]
        if x.shape[1:] != self.config.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} != model input {self.config.input_shape}")
        cfg, p = self.config, self.params
        h = Tensor(x)
        keep_conv = 1.0 - cfg.dropout_conv
        features = None
        for i, pooled in enumerate(cfg.pool_after, start=1):
            h = relu(conv2d(h, p[f"conv{i}.weight"], p[f"conv{i}.bias"]))
            if pooled:
                h = maxpool2d(h)
            if i == len(cfg.pool_after):
                features = h
            h = dropout(h, keep_conv, rng_stream, training)
        h = relu(linear(flatten(h), p["fc1.weight"], p["fc1.bias"]))
        h = dropout(h, 1.0 - cfg.dropout_fc, rng_stream, training)
        logits = linear(h, p["fc2.weight"], p["fc2.bias"])
        self._last_forward = (logits, features)
        return logits, features

    def backward(self, target: int | None = None) -> dict[str, np.ndarray]:
        """Gradients of the summed ``target`` logit (default: summed predicted logit)
        of the most recent forward pass, for every parameter and ``"features"``."""
        if self._last_forward is None:
            raise StateError("backward called before forward")
        logits, features = self._last_forward
        if target is None:
            target = int(np.argmax(logits.data.sum(axis=0)))
        score = select(logits, target)
        wrt = [features, *self.params.values()]
        grads = grad(score, wrt, seed=np.ones(score.shape))
        return {"features": grads[0], **dict(zip(self.params, grads[1:]))}

    def logits(self, x) -> np.ndarray:
        return self.forward(x, training=False)[0].data


def build(config: ClassifierConfig, seed: int = rng.DEFAULT_SEED,
          labels: Sequence[str] | None = None) -> ClassifierModel:
    """He-normal weights, zero biases, all drawn from per-parameter seed streams."""
    if labels is None:
        labels = [str(i) for i in range(config.n_classes)]
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".bias"):
            data = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            data = rng.stream(seed, "init", name).normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return ClassifierModel(config, params, labels)


# -- training ---------------------------------------------------------------

@dataclass
class TrainOptions:
    epochs: int = 10
    batch: int = 8
    lr: float = 1e-3
    specaugment: bool = False
    seed: int = rng.DEFAULT_SEED
    specaugment_params: dict | None = None


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float | None
    input_digest: str


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    confusion: list[list[int]] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    wall_clock_s: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def final_val_accuracy(self) -> float | None:
        return self.epochs[-1].val_accuracy if self.epochs else None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray


def _as_examples(model: ClassifierModel, dataset) -> tuple[list[np.ndarray], np.ndarray]:
    specs, labels = [], []
    for spec, label in dataset:
        values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
        if values.shape != model.config.input_shape[1:]:
            raise ShapeError(f"spectrogram shape {values.shape} != model input {model.config.input_shape[1:]}")
        specs.append(values)
        labels.append(model.index_of(label) if isinstance(label, str) else int(label))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= model.config.n_classes):
        raise ValidationError("label index out of range for the model vocabulary")
    return specs, labels


def _batches(n: int, size: int):
    # fixed-size batches, last partial batch kept
    return [slice(i, min(n, i + size)) for i in range(0, n, size)]


def train(model: ClassifierModel, dataset, opts: TrainOptions | None = None,
          validation=None) -> TrainReport:
    """Shuffled mini-batch Adam on softmax cross-entropy.

    ``dataset`` and ``validation`` are sequences of ``(spectrogram, label)``
    where the label is a vocabulary name or class index. With
    ``opts.specaugment`` each training spectrogram is augmented with a fresh
    draw before every forward pass.
    """
    from .masking import SpecAugmentParams, spec_augment

    opts = opts or TrainOptions()
    started = time.perf_counter()
    specs, labels = _as_examples(model, dataset)
    if opts.epochs > 0 and not specs:
        raise ValidationError("training dataset is empty")
    if opts.batch < 1:
        raise ValidationError("batch size must be >= 1")
    report = TrainReport(labels=list(model.labels))
    counts = np.bincount(labels, minlength=model.config.n_classes)
    for k in np.flatnonzero(counts == 0):
        report.warnings.append(f"class {model.labels[k]!r} has no training samples")
    aug = SpecAugmentParams(**(opts.specaugment_params or {}))

    state = AdamState(lr=opts.lr)
    names = list(model.params)
    wrt = [model.params[n] for n in names]
    for epoch in range(opts.epochs):
        order = rng.stream(opts.seed, "shuffle", epoch).permutation(len(specs))
        digest = hashlib.sha256()
        loss_sum, correct = 0.0, 0
        for b, sl in enumerate(_batches(len(order), opts.batch)):
            idx = order[sl]
            x = np.stack([specs[i] for i in idx]).astype(np.float64)
            if opts.specaugment:
                for row, i in enumerate(idx):
                    x[row] = spec_augment(x[row], aug, rng.stream(opts.seed, "specaugment", epoch, int(i)))
            digest.update(x.tobytes())
            y = labels[idx]
            logits, _ = model.forward(x[:, None], training=True,
                                      rng_stream=rng.stream(opts.seed, "dropout", epoch, b))
            loss = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss.data):
                norms = {n: float(np.linalg.norm(model.params[n].data)) for n in names}
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {b}; parameter norms {norms}")
            grads = grad(loss, wrt)
            adam_step(model.params, dict(zip(names, grads)), state)
            loss_sum += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == y).sum())
        val_acc = evaluate(model, validation).accuracy if validation else None
        stats = EpochStats(epoch, loss_sum / len(specs), correct / len(specs), val_acc, digest.hexdigest())
        log.info("epoch %d loss %.4f train_acc %.3f val_acc %s", epoch, stats.train_loss,
                 stats.train_accuracy, "-" if val_acc is None else f"{val_acc:.3f}")
        report.epochs.append(stats)

    if opts.epochs > 0:
        final = evaluate(model, validation if validation else dataset)
        report.confusion = final.confusion.tolist()
    report.wall_clock_s = time.perf_counter() - started
    return report


def predict(model: ClassifierModel, spec) -> tuple[int, np.ndarray]:
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    if values.shape != model.config.input_shape[1:]:
        raise ShapeError(f"spectrogram shape {values.shape} != model input {model.config.input_shape[1:]}")
    probs = softmax(model.logits(values[None, None]))[0]
    return int(np.argmax(probs)), probs


def predict_batch(model: ClassifierModel, specs: Iterable, batch: int = 8) -> np.ndarray:
    specs = [s.values if isinstance(s, Spectrogram) else np.asarray(s) for s in specs]
    out = [model.logits(np.stack(specs[sl])[:, None]).argmax(axis=1)
           for sl in _batches(len(specs), batch)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def evaluate(model: ClassifierModel, dataset, batch: int = 8) -> EvalResult:
    specs, labels = _as_examples(model, dataset)
    k = model.config.n_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    if specs:
        np.add.at(confusion, (labels, predict_batch(model, specs, batch)), 1)
    total = int(confusion.sum())
    return EvalResult(float(np.trace(confusion)) / total if total else 0.0, confusion)


# -- checkpoints ------------------------------------------------------------

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _meta_tensors(config: ClassifierConfig) -> dict[str, np.ndarray]:
    return {
        "meta.input_shape": np.asarray(config.input_shape, dtype=np.float64),
        "meta.hyper": np.asarray([config.kernel, config.fc_hidden, config.dropout_conv,
                                  config.dropout_fc], dtype=np.float64),
        "meta.pool_after": np.asarray(config.pool_after, dtype=np.float64),
    }


def encode_checkpoint(model: ClassifierModel) -> bytes:
    tensors = {**_meta_tensors(model.config), **{n: t.data for n, t in model.params.items()}}
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, model.config.n_classes),
             struct.pack("<I", len(model.labels))]
    parts += [_pack_str(label) for label in model.labels]
    parts.append(struct.pack("<I", len(tensors)))
    for name, data in tensors.items():
        parts.append(_pack_str(name))
        parts.append(struct.pack(f"<I{data.ndim}I", data.ndim, *data.shape))
        parts.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(model: ClassifierModel, sink) -> None:
    gridio.write_bytes(sink, encode_checkpoint(model))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 in checkpoint: {exc}") from None


def load_checkpoint(source, expected: ClassifierConfig | None = None) -> ClassifierModel:
    """Read an ACMK checkpoint; with ``expected`` also check every layer shape against it."""
    r = _Reader(gridio.read_bytes(source))
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("not an ACMK checkpoint (bad magic)")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    n_classes = r.u32()
    labels = [r.string() for _ in range(r.u32())]
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.string()
        dims = [r.u32() for _ in range(r.u32())]
        count = int(np.prod(dims)) if dims else 1
        payload = r.take(8 * count)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes in checkpoint")

    try:
        kernel, fc_hidden, dropout_conv, dropout_fc = tensors.pop("meta.hyper").tolist()
        config = ClassifierConfig(
            n_classes=n_classes, kernel=int(kernel), fc_hidden=int(fc_hidden),
            dropout_conv=dropout_conv, dropout_fc=dropout_fc,
            input_shape=tuple(int(d) for d in tensors.pop("meta.input_shape")),
            pool_after=tuple(bool(p) for p in tensors.pop("meta.pool_after")),
        )
    except KeyError as exc:
        raise FormatError(f"checkpoint missing metadata tensor {exc}") from None
    except ValidationError as exc:
        raise FormatError(f"invalid configuration in checkpoint: {exc}") from None

    reference = expected or config
    for name, shape in reference.param_shapes().items():
        if name not in tensors:
            raise FormatError(f"checkpoint missing tensor {name!r}")
        if tensors[name].shape != shape:
            raise ShapeError(f"layer {name}: checkpoint shape {tensors[name].shape} != expected {shape}")
    extra = set(tensors) - set(reference.param_shapes())
    if extra:
        raise FormatError(f"unexpected tensors in checkpoint: {sorted(extra)}")
    if expected is not None and expected != config:
        raise ShapeError(f"checkpoint configuration {config} != expected {expected}")
    params = {name: Tensor(tensors[name], requires_grad=True, name=name)
              for name in config.param_shapes()}
    try:
        return ClassifierModel(config, params, labels)
    except ValidationError as exc:
        raise FormatError(str(exc)) from None
