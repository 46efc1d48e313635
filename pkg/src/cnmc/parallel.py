"""Thread-count plumbing shared by the evaluators and the CLI."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_threads: int | None = None


def set_threads(n: int | None) -> None:
    global _threads
    if n is not None and n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = n


def get_threads() -> int:
    """Explicit setting, else CNMC_THREADS, else the number of available cores."""
    if _threads is not None:
        return _threads
    env = os.environ.get("CNMC_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"CNMC_THREADS must be an integer, got {env!r}") from None
        if n >= 1:
            return n
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover
        return os.cpu_count() or 1


def map_ordered(fn, items):
    """``[fn(x) for x in items]``, run on the worker pool; order is preserved."""
    items = list(items)
    n = min(get_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
