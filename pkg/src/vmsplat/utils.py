"""Small shared helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker count from VMSPLAT_THREADS; defaults to 1 (serial)."""
    raw = os.environ.get("VMSPLAT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def map_ordered(fn, items):
    """Map preserving input order, threaded when VMSPLAT_THREADS > 1.

    Results are identical to the serial path because each item's work is
    independent and the output order is the input order.
    """
    n = thread_count()
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
