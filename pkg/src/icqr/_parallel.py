"""Worker-count resolution and order-preserving parallel map.

ICQR_THREADS caps the number of worker processes for replicate-level
parallelism. Results are always assembled in input order and every
replicate derives its randomness from its own index, so outputs are
identical for any worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

from .errors import ValidationError

T = TypeVar("T")
R = TypeVar("R")

__all__ = ["resolve_workers", "parallel_map"]


def resolve_workers(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("ICQR_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValidationError(f"ICQR_THREADS must be an integer, got {env!r}") from exc
        return max(1, value)
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], R], items: Sequence[T],
                 workers: int | None = None) -> list[R]:
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
