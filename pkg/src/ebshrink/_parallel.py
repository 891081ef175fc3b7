"""Thread-pool helpers.

Parallelism never changes results: work items are mapped in index order and
collected in index order, so any reduction downstream sees the same operand
sequence regardless of EBSHRINK_THREADS.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count():
    """Worker count from EBSHRINK_THREADS, defaulting to the CPU count."""
    raw = os.environ.get("EBSHRINK_THREADS", "")
    try:
        k = int(raw)
    except ValueError:
        k = 0
    if k >= 1:
        return k
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Map ``fn`` over ``items``, preserving order.

    Uses a thread pool when more than one worker is configured; BLAS releases
    the GIL on the dense kernels so threads help despite CPython.
    """
    items = list(items)
    k = thread_count()
    if k <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))
