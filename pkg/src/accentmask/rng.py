"""Seeded, splittable random streams.

Every stream is a Philox counter-based generator keyed by a ``SeedSequence``
built from the global seed plus a path of string/int labels, e.g.
``stream(42, "mask", "utt-0001")``. Streams for different labels are
independent of each other and of the order in which they are created, so
per-utterance work can run in any order or in parallel.
"""
from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_SEED = 42


def _label_words(label) -> tuple[int, ...]:
    if isinstance(label, (int, np.integer)):
        value = int(label)
        if value < 0:
            raise ValueError("integer stream labels must be non-negative")
        # split into 32-bit words so arbitrarily large ints stay distinct
        words = []
        while True:
            words.append(value & 0xFFFFFFFF)
            value >>= 32
            if not value:
                break
        return (0, len(words), *words)
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=16).digest()
    return (1, *np.frombuffer(digest, dtype="<u4").tolist())


def seed_sequence(seed: int, *labels) -> np.random.SeedSequence:
    key: list[int] = []
    for label in labels:
        key.extend(_label_words(label))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))


def stream(seed: int, *labels) -> np.random.Generator:
    """Return an independent generator for ``(seed, *labels)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *labels)))
