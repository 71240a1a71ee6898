"""Order-preserving thread map capped by ``SEMIGROUP_LAB_THREADS``."""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "SEMIGROUP_LAB_THREADS"


def thread_cap():
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
    return n


def ordered_map(func, items, threads=None):
    """``list(map(func, items))``, possibly on a thread pool; order is kept."""
    items = list(items)
    n = thread_cap() if threads is None else int(threads)
    if n <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))
