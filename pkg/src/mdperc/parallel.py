"""Deterministic replica dispatch.

Replicas are independent tasks keyed by their index; every task owns its RNG
stream, so merged results are identical for any thread count or interleaving.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count(requested: int | str | None = None) -> int:
    """Resolve a thread count: explicit value, MPL_THREADS, or 'auto'."""
    env = os.environ.get("MPL_THREADS")
    if requested in (None, "auto"):
        if env:
            return max(1, int(env))
        return max(1, min(8, os.cpu_count() or 1))
    return max(1, int(requested))


def pmap(fn: Callable[[T], R], items: Sequence[T],
         threads: int | str | None = None) -> list[R]:
    """Map preserving input order; output is independent of scheduling."""
    nt = thread_count(threads)
    if nt == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(fn, items))
