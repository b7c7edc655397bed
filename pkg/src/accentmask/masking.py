"""Saliency-driven probabilistic masking and the SpecAugment baseline.

Mask semantics: ``M = 1`` keeps a pixel, ``M = 0`` suppresses it. With
saliency score ``C`` and an i.i.d. uniform field ``R``:

* ``C <= t_enter``            keep
* ``C >= t_high``             suppress (the keep condition ``R > 1`` never holds)
* ``t_mid <= C < t_high``     keep iff ``R > u``, ``u ~ U(mid_band)``
* ``t_enter < C < t_mid``     keep iff ``R > u``, ``u ~ U(low_band)``

so a mid-band pixel is suppressed with probability ``u``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gridio, rng
from .errors import FormatError, ShapeError, ValidationError
from .frontend import Spectrogram

GRANULARITIES = ("per-pixel", "per-utterance")


@dataclass(frozen=True)
class MaskPolicy:
    t_enter: float = 0.3
    t_mid: float = 0.5
    t_high: float = 0.7
    mid_band: tuple[float, float] = (0.7, 0.9)
    low_band: tuple[float, float] = (0.0, 0.05)
    granularity: str = "per-pixel"

    def __post_init__(self):
        object.__setattr__(self, "mid_band", tuple(float(v) for v in self.mid_band))
        object.__setattr__(self, "low_band", tuple(float(v) for v in self.low_band))
        if not 0.0 <= self.t_enter < self.t_mid < self.t_high <= 1.0:
            raise ValidationError(
                f"thresholds must satisfy 0 <= t_enter < t_mid < t_high <= 1, got "
                f"{self.t_enter}, {self.t_mid}, {self.t_high}")
        for name in ("mid_band", "low_band"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValidationError(f"{name} must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
        if self.granularity not in GRANULARITIES:
            raise ValidationError(f"granularity must be one of {GRANULARITIES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mid_band"], d["low_band"] = list(self.mid_band), list(self.low_band)
        return d

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class BinaryMask:
    grid: np.ndarray
    policy: MaskPolicy | None = None
    seed: int | None = None
    stream_key: tuple = field(default=())

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.uint8)

    @property
    def shape(self):
        return self.grid.shape


def _scores(sal) -> np.ndarray:
    return np.asarray(getattr(sal, "scores", sal), dtype=np.float64)


def _values(spec) -> np.ndarray:
    return spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)


def threshold_mask(sal, policy: MaskPolicy | None = None) -> np.ndarray:
    policy = policy or MaskPolicy()
    return (_scores(sal) > policy.t_enter).astype(np.uint8)


def random_field(shape, generator: np.random.Generator) -> np.ndarray:
    return generator.random(shape)


def build_mask(sal, policy: MaskPolicy | None = None, seed: int = rng.DEFAULT_SEED,
               key: tuple = (), shape: tuple[int, int] | None = None) -> BinaryMask:
    """Draw the keep/suppress mask for a saliency map.

    Randomness comes from ``rng.stream(seed, "mask", *key)``: the uniform field
    first, then the mid- and low-band bounds (one per pixel, or one per call
    with per-utterance granularity).
    """
    policy = policy or MaskPolicy()
    c = _scores(sal)
    if shape is not None and c.shape != tuple(shape):
        raise ShapeError(f"saliency shape {c.shape} != spectrogram shape {tuple(shape)}")
    g = rng.stream(seed, "mask", *key)
    r = random_field(c.shape, g)
    size = c.shape if policy.granularity == "per-pixel" else None
    u_mid = g.uniform(*policy.mid_band, size=size)
    u_low = g.uniform(*policy.low_band, size=size)

    keep = np.ones(c.shape, dtype=bool)
    candidate = c > policy.t_enter
    high = candidate & (c >= policy.t_high)
    mid = candidate & (c >= policy.t_mid) & (c < policy.t_high)
    low = candidate & (c < policy.t_mid)
    keep[high] = r[high] > 1.0
    keep[mid] = (r > u_mid)[mid]
    keep[low] = (r > u_low)[low]
    return BinaryMask(keep.astype(np.uint8), policy, seed, tuple(key))


def apply_mask(spec, mask):
    """Element-wise product with the mask; suppressed cells become exactly +0.0."""
    values = _values(spec)
    grid = getattr(mask, "grid", mask)
    grid = np.asarray(grid)
    if grid.shape != values.shape:
        raise ShapeError(f"mask shape {grid.shape} != spectrogram shape {values.shape}")
    out = np.where(grid != 0, values, np.zeros((), dtype=values.dtype))
    return Spectrogram(out) if isinstance(spec, Spectrogram) else out


def band_names(policy: MaskPolicy) -> list[str]:
    p = policy
    return [f"C<={p.t_enter:g}", f"{p.t_enter:g}<C<{p.t_mid:g}",
            f"{p.t_mid:g}<=C<{p.t_high:g}", f"C>={p.t_high:g}"]


def mask_stats(pairs, policy: MaskPolicy | None = None) -> dict:
    """Keep fraction and per-band suppression rates.

    ``pairs`` is one ``(mask, saliency)`` pair or an iterable of them.
    Rates of empty bands are reported as ``None``.
    """
    policy = policy or MaskPolicy()
    if isinstance(pairs, tuple) and len(pairs) == 2 and not isinstance(pairs[0], tuple):
        pairs = [pairs]
    names = band_names(policy)
    counts = np.zeros(4, dtype=np.int64)
    masked = np.zeros(4, dtype=np.int64)
    total = kept = 0
    for mask, sal in pairs:
        m = np.asarray(getattr(mask, "grid", mask))
        c = _scores(sal)
        if m.shape != c.shape:
            raise ShapeError(f"mask shape {m.shape} != saliency shape {c.shape}")
        bands = [c <= policy.t_enter,
                 (c > policy.t_enter) & (c < policy.t_mid),
                 (c >= policy.t_mid) & (c < policy.t_high),
                 c >= policy.t_high]
        for i, sel in enumerate(bands):
            counts[i] += int(sel.sum())
            masked[i] += int((m[sel] == 0).sum())
        total += m.size
        kept += int((m != 0).sum())
    return {
        "pixels": total,
        "keep_fraction": kept / total if total else None,
        "masked_fraction": (total - kept) / total if total else None,
        "bands": {
            name: {"pixels": int(n), "masked": int(k), "rate": (k / n) if n else None}
            for name, n, k in zip(names, counts.tolist(), masked.tolist())
        },
    }


# -- SpecAugment ------------------------------------------------------------

@dataclass(frozen=True)
class SpecAugmentParams:
    n_freq_masks: int = 2
    F: int = 27
    n_time_masks: int = 2
    T_max: int = 100


def spec_augment(spec, params: SpecAugmentParams | None = None, seed=rng.DEFAULT_SEED):
    """Zero ``n_freq_masks`` bands of whole rows and ``n_time_masks`` bands of whole
    columns; widths uniform on ``{0..F}`` / ``{0..T_max}``, starts uniform."""
    params = params or SpecAugmentParams()
    values = _values(spec)
    n_mels, n_frames = values.shape
    if params.F > n_mels or params.T_max > n_frames:
        raise ValueError(f"mask widths (F={params.F}, T_max={params.T_max}) exceed grid {values.shape}")
    g = seed if isinstance(seed, np.random.Generator) else rng.stream(seed, "specaugment")
    out = values.copy()
    for _ in range(params.n_freq_masks):
        f = int(g.integers(0, params.F + 1))
        start = int(g.integers(0, n_mels - f + 1))
        out[start:start + f, :] = 0
    for _ in range(params.n_time_masks):
        t = int(g.integers(0, params.T_max + 1))
        start = int(g.integers(0, n_frames - t + 1))
        out[:, start:start + t] = 0
    return Spectrogram(out) if isinstance(spec, Spectrogram) else out


# -- MASK files -------------------------------------------------------------

def write_mask(mask: BinaryMask, sink) -> None:
    gridio.write_bytes(sink, gridio.encode_grid(b"MASK", mask.grid))


def read_mask(source) -> BinaryMask:
    grid = gridio.decode_grid(b"MASK", gridio.read_bytes(source))
    if grid.size and grid.max() > 1:
        raise FormatError("mask cells must be 0 or 1")
    return BinaryMask(grid)
