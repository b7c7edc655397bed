"""Synthetic two-class data, separable by construction.

Class 0 ("low") carries its energy in the lower half of the mel axis, class 1
("high") in the upper half. Used by the tests, the benchmark and the CLI
smoke run.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import rng
from .corpus import UtteranceRecord, save_manifest
from .frontend import N_MELS, SAMPLE_RATE, encode_wav
from .gridio import atomic_write

BAND_LABELS = ("low", "high")


def band_spectrogram(label: int, n_mels: int = N_MELS, n_frames: int = 128,
                     generator: np.random.Generator | None = None) -> np.ndarray:
    g = generator or np.random.default_rng()
    values = g.normal(-0.6, 0.25, size=(n_mels, n_frames))
    half = n_mels // 2
    rows = slice(0, half) if label == 0 else slice(half, n_mels)
    # bursty frame activity so bands are not flat stripes
    activity = (g.random(n_frames) < 0.7) * g.uniform(0.6, 1.2, size=n_frames)
    values[rows] += activity[None, :] + g.normal(0.0, 0.15, size=(n_mels - half if label else half, n_frames))
    return values.astype(np.float32)


def band_dataset(n: int, n_frames: int = 128, seed: int = rng.DEFAULT_SEED,
                 n_mels: int = N_MELS) -> list[tuple[np.ndarray, int]]:
    """``n`` examples with alternating labels 0, 1, 0, ..."""
    return [(band_spectrogram(i % 2, n_mels, n_frames, rng.stream(seed, "band", i)), i % 2)
            for i in range(n)]


def band_audio(label: int, duration_s: float, generator: np.random.Generator,
               sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """A handful of random partials inside the class band, gated in 100 ms blocks."""
    t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
    lo, hi = (150.0, 1400.0) if label == 0 else (2500.0, 7000.0)
    out = np.zeros_like(t)
    for freq in generator.uniform(lo, hi, size=6):
        out += np.sin(2 * np.pi * freq * t + generator.uniform(0, 2 * np.pi))
    gate = np.repeat(generator.random(int(np.ceil(duration_s * 10))) < 0.8, sample_rate // 10)
    out *= gate[:len(out)]
    out += generator.normal(0.0, 0.05, size=len(out))
    return 0.9 * out / max(1e-9, np.abs(out).max())


def write_band_corpus(out_dir, n_utterances: int = 10, seed: int = rng.DEFAULT_SEED,
                      duration_s: float = 3.0, dev_every: int = 0) -> Path:
    """Write WAV files plus ``manifest.jsonl`` into ``out_dir``; return the manifest path.

    With ``dev_every = k > 0`` every k-th utterance goes to the dev split.
    """
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_utterances):
        label = i % 2
        uid = f"utt{i:04d}"
        audio = band_audio(label, duration_s, rng.stream(seed, "audio", i))
        atomic_write(out_dir / "audio" / f"{uid}.wav", encode_wav(audio))
        split = "dev" if dev_every and i % dev_every == dev_every - 1 else "train"
        records.append(UtteranceRecord(uid, f"audio/{uid}.wav", BAND_LABELS[label],
                                       transcript=f"sample {i}", split=split, duration_s=duration_s))
    manifest = out_dir / "manifest.jsonl"
    save_manifest(records, manifest)
    return manifest


def manifest_with_counts(counts: dict[str, int], seconds: float = 5.0) -> list[UtteranceRecord]:
    """Records with the given per-accent sample counts (for statistics tables)."""
    return [UtteranceRecord(f"{accent}-{i}", f"{accent}/{i}.wav", accent, duration_s=seconds)
            for accent, n in counts.items() for i in range(n)]
