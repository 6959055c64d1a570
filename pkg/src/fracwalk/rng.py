"""Seeded random streams and replica-block scheduling.

Every Monte Carlo estimate in the package is computed over fixed-size blocks
of replicas. Block ``b`` of a study tagged ``key`` always draws from

    numpy.random.default_rng(SeedSequence(master_seed, spawn_key=(*key, b)))

so the numbers a replica sees depend only on (master_seed, key, replica index)
and never on how many workers executed the blocks or in what order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 8192
THREADS_ENV = "FRACWALK_THREADS"

T = TypeVar("T")


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream addressed by ``key``."""
    if master_seed is None:
        raise ValueError("a master seed is required")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    return max(1, n)


def block_sizes(n: int, block_size: int = BLOCK_SIZE) -> list[int]:
    """Split ``n`` replicas into fixed blocks; the last block may be short."""
    if n <= 0:
        return []
    full, rest = divmod(n, block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[int, int, np.random.Generator], T],
    n: int,
    master_seed: int,
    key: Sequence[int] = (),
    block_size: int = BLOCK_SIZE,
    threads: int | None = None,
) -> list[T]:
    """Run ``fn(block_index, block_len, rng)`` over all blocks, in block order.

    The result list is ordered by block index whatever the thread count.
    """
    sizes = block_sizes(n, block_size)
    threads = worker_count() if threads is None else max(1, int(threads))

    def run(b: int) -> T:
        return fn(b, sizes[b], stream(master_seed, *key, b))

    if threads == 1 or len(sizes) <= 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(sizes))))
