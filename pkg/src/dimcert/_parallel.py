"""Optional thread parallelism, capped by the ``DIMCERT_THREADS`` variable."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def max_workers() -> int:
    try:
        n = int(os.environ.get("DIMCERT_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def parallel_map(fn, items) -> list:
    """Ordered map; results are independent of the worker count."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))
