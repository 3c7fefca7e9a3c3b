"""Ordered thread-pool map used for block enumeration and MC shards."""

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads():
    try:
        return max(1, int(os.environ.get("FBLAB_THREADS", "1")))
    except ValueError:
        return 1


def ordered_map(fn, items, threads=None):
    """``list(map(fn, items))`` computed on ``threads`` workers.

    Results come back in input order, so any reduction applied to them
    afterwards is independent of the thread count.
    """
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
