"""Deterministic random streams for Monte-Carlo trials.

Trials are grouped into fixed-size blocks and every block owns a stream
derived from ``(seed, *key, block_index)``.  The block layout depends only on
the trial count and block size, never on the worker count, so results are the
same for any number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

TRIAL_BLOCK = 64


def stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def trial_blocks(seed, T, key=(), block=TRIAL_BLOCK):
    """Yield ``(start, stop, rng)`` covering ``range(T)``."""
    for b, start in enumerate(range(0, T, block)):
        yield start, min(start + block, T), stream(seed, *key, b)


def map_blocks(fn, blocks, threads=1):
    """Apply ``fn(start, stop, rng)`` to each block, results in block order."""
    blocks = list(blocks)
    if threads is None or threads <= 1 or len(blocks) <= 1:
        return [fn(*b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), blocks))
