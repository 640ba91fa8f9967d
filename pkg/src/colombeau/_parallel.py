"""Ordered parallel map capped by the COLOMBEAU_THREADS environment variable."""

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    cap = os.environ.get("COLOMBEAU_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def map_ordered(fn, items):
    """``list(map(fn, items))``, possibly on a thread pool; order is preserved."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
