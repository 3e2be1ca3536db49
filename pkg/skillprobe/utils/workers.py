"""Worker-count resolution and deterministic fan-out over independent cells."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def resolve_worker_count(requested: Optional[int] = None, env_key: str = "SKILLPROBE_THREADS") -> int:
    """Resolve the worker cap: explicit value, then SKILLPROBE_THREADS, then 1."""
    if requested is not None and requested > 0:
        return int(requested)

    raw = os.getenv(env_key, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_ordered(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int] = None) -> List[R]:
    """Map ``fn`` over ``items`` and return results in input order.

    Each item must own its RNG stream; results never depend on completion order.
    """
    worker_count = min(resolve_worker_count(workers), max(1, len(items)))
    if worker_count <= 1:
        return [fn(item) for item in items]

    with ThreadPoolExecutor(max_workers=worker_count) as pool:
        return list(pool.map(fn, items))
