#!/usr/bin/env python3
"""
Thread pool and random-stream helpers.

Results never depend on the thread count: work items carry their own random
substreams and results are gathered in input order.
"""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item, possibly in parallel, keeping input order.

    Args:
        fn: function applied to each item
        items: work items
        threads: maximum worker threads (None = available cores)

    Returns:
        list: fn(item) for each item, in the order of items
    """
    work = list(items)
    workers = min(threads or default_threads(), len(work))
    if workers <= 1:
        return [fn(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, work))


def stable_key(*parts: object) -> int:
    """64-bit key derived from the string form of parts (stable across runs)."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *parts: object) -> np.random.Generator:
    """
    Counter-based random stream for one work item.

    The stream is a Philox generator keyed by (seed, parts), so streams of
    different entities, trees or cases are independent and reproducible no
    matter in which order or on which thread they are consumed.
    """
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stable_key(*parts)])
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *parts: object) -> int:
    """Integer seed for a child component, derived like substream()."""
    return int(substream(seed, *parts).integers(0, 2**63 - 1))
