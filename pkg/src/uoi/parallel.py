"""Deterministic task execution for the bootstrap / penalty work items.

Tasks are closures over immutable inputs and a derived seed, so any worker
count and any completion order produce the same values.  Results are
returned in submission order and all downstream reductions consume them in
that order, which keeps fits bit-identical across thread counts.  BLAS
pools are pinned to one thread inside fits for the same reason: the
reduction order inside a multithreaded GEMM is not fixed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Sequence, TypeVar

from threadpoolctl import threadpool_limits

T = TypeVar("T")

__all__ = ["run_tasks", "deterministic_blas"]


def run_tasks(tasks: Sequence[Callable[[], T]], workers: int = 1) -> list[T]:
    """Run independent tasks, returning results in submission order."""
    if workers <= 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


@contextmanager
def deterministic_blas():
    """Pin BLAS pools to a single thread for reproducible linear algebra."""
    with threadpool_limits(limits=1, user_api="blas"):
        yield
