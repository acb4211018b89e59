"""Deterministic data-parallel runtime and memory-unit accounting.

The runtime stands in for a wide parallel device: callers express work as
independent per-index tasks, global key sorts, and reductions.  Every
operation's result is a pure function of its inputs, identical for any worker
count; parallelism only affects wall time.  Memory is accounted in abstract
candidate-row units by MemoryBudget.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MEMORY_UNITS = 1 << 20
DEFAULT_CONCURRENCY = 4096

# Below this many indices a thread pool costs more than it saves.
_PARALLEL_THRESHOLD = 64


class InvalidSortKeyError(ValueError):
    """A sort key was NaN or otherwise unusable."""


class EmptyReductionError(ValueError):
    """A reduction over an empty sequence was requested."""


class BudgetError(ValueError):
    """Invalid budget configuration or release below zero."""


@dataclass
class ParallelismConfig:
    """Execution knobs: worker count and the modeled compute width C."""

    worker_count: int = 0  # 0 means "machine parallelism"
    deterministic: bool = True
    concurrency_capacity: int = DEFAULT_CONCURRENCY

    def __post_init__(self):
        if self.worker_count == 0:
            self.worker_count = os.cpu_count() or 1
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        if self.concurrency_capacity < 1:
            raise ValueError("concurrency_capacity must be >= 1")
        # The contract requires identical results for any worker count.
        self.deterministic = True


class MemoryBudget:
    """Counts candidate-row units in use, enforcing a hard capacity.

    Attributes:
        capacity: maximum units that may be held at once.
        in_use: currently reserved units.
        peak: high-water mark of in_use.
    """

    def __init__(self, capacity=DEFAULT_MEMORY_UNITS):
        if capacity < 1:
            raise BudgetError("budget capacity must be >= 1")
        self.capacity = int(capacity)
        self.in_use = 0
        self.peak = 0

    def try_reserve(self, units):
        """Reserve units; returns False (state unchanged) on overflow."""
        if units < 0:
            raise BudgetError("cannot reserve a negative unit count")
        if self.in_use + units > self.capacity:
            return False
        self.in_use += units
        if self.in_use > self.peak:
            self.peak = self.in_use
        return True

    def release(self, units):
        if units < 0:
            raise BudgetError("cannot release a negative unit count")
        if units > self.in_use:
            raise BudgetError("release below zero")
        self.in_use -= units


class ParallelRuntime:
    """Executes independent tasks, sorts, and reductions deterministically.

    Args:
        workers: worker thread count; None or 0 picks machine parallelism.
        concurrency_capacity: modeled compute width C (cost model input).
    """

    def __init__(self, workers=None, concurrency_capacity=DEFAULT_CONCURRENCY):
        self.config = ParallelismConfig(
            worker_count=int(workers) if workers else 0,
            concurrency_capacity=concurrency_capacity,
        )
        self._pool = None

    @property
    def workers(self):
        return self.config.worker_count

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _get_pool(self):
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        return self._pool

    def parallel_for(self, count, body):
        """Run body(i) for i in [0, count); bodies must be write-disjoint.

        Observable state afterwards equals sequential ascending-order
        execution; with multiple workers the index range is chunked and the
        chunks run concurrently.
        """
        count = int(count)
        if count <= 0:
            return
        if self.workers == 1 or count < _PARALLEL_THRESHOLD:
            for i in range(count):
                body(i)
            return
        pool = self._get_pool()
        chunk = (count + self.workers - 1) // self.workers

        def run_chunk(start):
            for i in range(start, min(start + chunk, count)):
                body(i)

        list(pool.map(run_chunk, range(0, count, chunk)))

    def sort_permutation(self, keys, ties):
        """Permutation ordering rows ascending by (key, tie).

        One stable sort on the keys, then equal-key runs are reordered by
        the tie column; with many duplicate keys a two-column lexsort is
        cheaper and used instead.  The result is always the unique
        (key, tie) ascending permutation.

        Args:
            keys: finite float array.
            ties: integer array making the order total.

        Raises:
            InvalidSortKeyError: any key is NaN or infinite.
        """
        keys = np.asarray(keys, dtype=np.float64)
        if keys.size and not np.all(np.isfinite(keys)):
            raise InvalidSortKeyError("sort keys must be finite")
        ties = np.asarray(ties, dtype=np.int64)
        if keys.size <= 1:
            return np.arange(keys.size, dtype=np.intp)
        perm = np.argsort(keys, kind="stable")
        sk = keys[perm]
        dup = sk[1:] == sk[:-1]
        ndup = int(dup.sum())
        if ndup == 0:
            return perm
        if ndup > keys.size // 4:
            return np.lexsort((ties, keys))
        idx = np.flatnonzero(dup)
        brk = np.flatnonzero(np.diff(idx) > 1)
        run_starts = idx[np.concatenate(([0], brk + 1))]
        run_ends = idx[np.concatenate((brk, [idx.size - 1]))] + 2
        for s, e in zip(run_starts, run_ends):
            seg = perm[s:e]
            perm[s:e] = seg[np.argsort(ties[seg], kind="stable")]
        return perm

    def parallel_sort_by_key(self, keys, ties, *payload_columns):
        """Sorted (keys, ties, *payloads) ascending by (key, tie)."""
        perm = self.sort_permutation(keys, ties)
        keys = np.asarray(keys, dtype=np.float64)[perm]
        ties = np.asarray(ties, dtype=np.int64)[perm]
        cols = tuple(np.asarray(c)[perm] for c in payload_columns)
        return (keys, ties) + cols

    def parallel_max(self, values):
        """Maximum of a non-empty sequence of finite reals."""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise EmptyReductionError("parallel_max over empty input")
        if not np.all(np.isfinite(values)):
            raise InvalidSortKeyError("parallel_max requires finite values")
        return float(values.max())
