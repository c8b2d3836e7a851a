"""Ordered work distribution.

Work items are pure functions of their arguments, so results do not depend
on the number of workers; they are always returned in submission order and
reduced by the caller in that order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable


def thread_budget(requested: int | None = None) -> int:
    """Explicit request, else ``HOMOG_THREADS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("HOMOG_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def ordered_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
