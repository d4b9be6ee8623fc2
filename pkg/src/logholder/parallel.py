"""Deterministic chunked reductions.

Work is cut into chunks whose boundaries depend only on the problem size.
Chunks may run on a thread pool, but partial results are combined in chunk
order with ``math.fsum`` (exactly rounded), so the result is bit-identical
for any thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 1 << 16


def default_threads() -> int:
    env = os.environ.get("LOGHOLDER_THREADS")
    if env:
        return max(1, int(env))
    return 1


def chunk_bounds(n: int, chunk: int = DEFAULT_CHUNK):
    return [(s, min(n, s + chunk)) for s in range(0, n, chunk)]


def map_chunks(fn, n: int, chunk: int = DEFAULT_CHUNK, threads: int | None = None):
    """``[fn(start, stop) for each chunk]`` in chunk order."""
    bounds = chunk_bounds(n, chunk)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda ab: fn(*ab), bounds))


def chunked_sum(fn, n: int, chunk: int = DEFAULT_CHUNK, threads: int | None = None) -> float:
    """Exactly rounded sum of the per-chunk partial sums ``fn(start, stop)``."""
    return math.fsum(map_chunks(fn, n, chunk, threads))


def stable_sum(x, chunk: int = DEFAULT_CHUNK) -> float:
    """Sum of an array as fsum over fixed-size pairwise partial sums."""
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(float(np.sum(x[a:b])) for a, b in chunk_bounds(len(x), chunk))


def stable_mean(x, chunk: int = DEFAULT_CHUNK) -> float:
    x = np.asarray(x, dtype=float).ravel()
    return stable_sum(x, chunk) / len(x)
