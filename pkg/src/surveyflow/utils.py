"""Small shared helpers: hashing, rounding, per-item thread fan-out."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def round_half_up_ratio(numerator: int, denominator: int) -> int:
    """round(n/d) with exact half-up tie handling, for non-negative n and d > 0."""
    return (2 * numerator + denominator) // (2 * denominator)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], max_workers: int | None = None) -> list[R]:
    """Order-preserving map over items, fanned out across worker threads.

    Per-image pipeline stages are independent, so they may use every
    available core; results come back in input order regardless.
    """
    if max_workers is None:
        max_workers = os.cpu_count() or 1
    if max_workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(max_workers, len(items))) as pool:
        return list(pool.map(fn, items))


def stable_lines(items: Iterable[str]) -> str:
    return "\n".join(items) + "\n"
