from __future__ import annotations

import logging
from functools import partial
from multiprocessing import Pool
from typing import Callable, TypeVar

import numpy as np

from regen_bounds.distributions import RngStream

logger = logging.getLogger(__name__)

T = TypeVar("T")

STREAM_SHIFT = 32


def chunk_sizes(n: int, chunk_size: int) -> list[int]:
    if n < 1:
        return []
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def stream_id(base: int, chunk: int) -> int:
    return (base << STREAM_SHIFT) | chunk


def _run_one(task: Callable[[RngStream, int], T], seed: int, sid: int, size: int) -> T:
    return task(RngStream(seed, sid), size)


def run_chunked(
    task: Callable[[RngStream, int], T],
    n: int,
    seed: int,
    stream_base: int = 0,
    chunk_size: int = 65536,
    workers: int = 1,
    first_chunk: int = 0,
) -> list[T]:
    """Run task over fixed-size chunks, one stream id per chunk, results in chunk order.

    Chunking depends only on (n, chunk_size), so the outputs are identical for
    any worker count. first_chunk offsets the chunk indices so a caller can
    draw further rounds from the same streams.
    """
    sizes = chunk_sizes(n, chunk_size)
    jobs: list[tuple[int, int, int]] = [(seed, stream_id(stream_base, k), s) for k, s in enumerate(sizes, start=first_chunk)]
    logger.debug("run_chunked: %d replications in %d chunks on %d workers", n, len(jobs), workers)
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(task, *job) for job in jobs]
    with Pool(processes=min(workers, len(jobs))) as pool:
        return pool.starmap(partial(_run_one, task), jobs)


def merge_arrays(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)
