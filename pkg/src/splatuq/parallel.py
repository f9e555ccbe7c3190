"""Worker-count control shared by the multi-camera loops."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "SPLAT_UNCERT_THREADS"


def worker_count() -> int:
    """Workers allowed by ``SPLAT_UNCERT_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get(ENV_VAR, "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError(f"{ENV_VAR} must be >= 0")
    return n or (os.cpu_count() or 1)


def ordered_map(fn, items) -> list:
    """``[fn(x) for x in items]``, threaded when more than one worker is allowed."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
