"""Counter-based random streams keyed by labels.

Every draw in the package comes from ``stream(seed, label, *counters)``,
a Philox generator whose key is derived from the root seed and a hash of
the label and counters. Two calls with the same arguments give the same
numbers no matter which thread makes them or in what order.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _label_words(label: str, counters) -> list[int]:
    text = label + "|" + "|".join(str(int(c)) for c in counters)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def seed_sequence(seed: int, label: str, *counters: int) -> np.random.SeedSequence:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.SeedSequence([int(seed)] + _label_words(label, counters))


def stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    """Independent generator for ``(seed, label, counters)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, label, *counters)))


def chunk_streams(seed: int, label: str, n: int, chunk: int, *counters: int):
    """Yield ``(start, stop, generator)`` over ``range(n)`` in fixed-size chunks.

    The chunking depends only on ``n`` and ``chunk``, so results assembled
    from the chunks do not depend on how they are scheduled.
    """
    for j, start in enumerate(range(0, n, chunk)):
        yield start, min(n, start + chunk), stream(seed, label, *counters, j)
