from __future__ import annotations

import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")

# Chunking is independent of the worker count so reductions happen in the
# same order (and give the same bits) however many workers run.
CHUNK_ROWS = 256


def chunk_slices(n_rows: int, chunk_rows: int = CHUNK_ROWS) -> list[slice]:
    return [slice(start, min(start + chunk_rows, n_rows)) for start in range(0, n_rows, chunk_rows)]


@functools.lru_cache(maxsize=None)
def _executor(workers: int) -> ThreadPoolExecutor:
    log.debug("Starting thread pool with %d worker(s)", workers)
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="flash-max")


def map_chunks(
    fn: Callable[[slice], T],
    n_rows: int,
    workers: int = 1,
    chunk_rows: int = CHUNK_ROWS,
) -> list[T]:
    """Apply *fn* to consecutive row slices; results come back in chunk order."""
    slices = chunk_slices(n_rows, chunk_rows)
    if workers <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    return list(_executor(workers).map(fn, slices))


def sum_in_order(parts: list):
    """Element-wise sum of equally structured tuples/arrays, left to right."""
    total = parts[0]
    for part in parts[1:]:
        if isinstance(total, tuple):
            total = tuple(sum_in_order([a, b]) for a, b in zip(total, part))
        elif isinstance(total, list):
            total = [sum_in_order([a, b]) for a, b in zip(total, part)]
        else:
            total = total + part
    return total
