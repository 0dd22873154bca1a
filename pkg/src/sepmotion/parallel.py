"""Order-preserving parallel map over independent tasks.

BLAS is pinned to one thread inside the map so that results do not depend on
how many workers run; only the number of concurrent tasks changes.
"""

import os
from concurrent.futures import ThreadPoolExecutor

from threadpoolctl import threadpool_limits


def default_threads() -> int:
    return os.cpu_count() or 1


def parallel_map(fn, items, threads: int | None = 1) -> list:
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    with threadpool_limits(limits=1):
        if threads == 1 or len(items) <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
