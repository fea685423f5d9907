"""Worker-count policy and a small helper for read-only fan-out.

The ESGNN_THREADS environment variable caps the worker pool; unset or
invalid values fall back to the CPU count. Parallel sections only run
inference-style work (no tape recording), which is thread safe because the
active-tape stack is thread local.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "ESGNN_THREADS"


def worker_count() -> int:
    raw = os.environ.get(ENV_VAR)
    if raw is not None:
        try:
            n = int(raw)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return max(1, os.cpu_count() or 1)


def map_items(fn, items, workers: int | None = None) -> list:
    """Apply ``fn`` over items, preserving order; serial when one worker."""
    items = list(items)
    n = worker_count() if workers is None else max(1, workers)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
