"""Streaming inserts and deletes on top of the bulk-built index.

Inserts collect in a bounded pending cache and trigger a full rebuild
only when the cache overflows; deletes tombstone their table entry in
place.  Queries merge the tree engine's answers (which skip tombstones)
with a linear scan of the pending cache, so results are always exact
with respect to the live object set.
"""

from __future__ import annotations

import numpy as np

from .metrics import distance
from .data import DataObject, Dataset
from .runtime import ParallelRuntime
from .search import BatchSearcher
from .tree import TreeConfig, build

DEFAULT_CACHE_CAPACITY = 512


class UpdateError(KeyError):
    """Insert of a live id or delete of an unknown id."""


class StreamingIndex:
    """A pivot-tree index that absorbs inserts and deletes between rebuilds.

    Args:
        dataset: initial objects (may be empty).
        config: TreeConfig for every (re)build.
        runtime: shared ParallelRuntime.
        cache_capacity: pending inserts allowed before a rebuild triggers.
        memory_units: search-time row budget passed to the engine.
    """

    def __init__(
        self,
        dataset,
        config=None,
        runtime=None,
        cache_capacity=DEFAULT_CACHE_CAPACITY,
        memory_units=None,
    ):
        if cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        self.config = config or TreeConfig()
        self.rt = runtime or ParallelRuntime(workers=1)
        self.cache_capacity = int(cache_capacity)
        self.memory_units = memory_units
        self.pending = {}
        self.tombstoned = set()
        self.rebuild_count = 0
        self.tree = build(dataset, self.config, self.rt)

    @classmethod
    def from_tree(
        cls,
        tree,
        runtime=None,
        cache_capacity=DEFAULT_CACHE_CAPACITY,
        memory_units=None,
    ):
        """Wrap an already-built tree (e.g. a loaded snapshot) unchanged."""
        obj = cls.__new__(cls)
        obj.config = tree.config
        obj.rt = runtime or ParallelRuntime(workers=1)
        if cache_capacity < 1:
            raise ValueError("cache_capacity must be >= 1")
        obj.cache_capacity = int(cache_capacity)
        obj.memory_units = memory_units
        obj.pending = {}
        obj.tombstoned = set(
            int(i) for i in tree.dataset.ids[tree.rows[tree.tombstone == 1]]
        )
        obj.rebuild_count = 0
        obj.tree = tree
        return obj

    # -- views -------------------------------------------------------------

    @property
    def dataset(self):
        return self.tree.dataset

    @property
    def metric(self):
        return self.dataset.metric

    @property
    def n_live(self):
        return self.dataset.n - len(self.tombstoned) + len(self.pending)

    def live_objects(self):
        """(id, payload) pairs for every live object, ascending by id."""
        ds = self.dataset
        items = [
            (int(ds.ids[row]), ds.payload(row))
            for row in range(ds.n)
            if int(ds.ids[row]) not in self.tombstoned
        ]
        items.extend(self.pending.items())
        items.sort(key=lambda kv: kv[0])
        return items

    # -- mutations ---------------------------------------------------------

    def insert(self, obj_id, payload):
        """Add an object; rebuilds when the pending cache overflows.

        Reinserting a tombstoned id is allowed (the tombstone keeps the
        stale table entry suppressed); inserting a live id is an error.
        """
        obj_id = int(obj_id)
        if obj_id in self.pending:
            raise UpdateError(f"id {obj_id} already pending")
        if self._indexed(obj_id) and obj_id not in self.tombstoned:
            raise UpdateError(f"id {obj_id} already live in the index")
        self.pending[obj_id] = payload
        if len(self.pending) > self.cache_capacity:
            self.flush_rebuild()

    def delete(self, obj_id):
        """Remove an object: drop it from the cache or tombstone its entry."""
        obj_id = int(obj_id)
        if obj_id in self.pending:
            del self.pending[obj_id]
            return
        if self._indexed(obj_id) and obj_id not in self.tombstoned:
            pos = self.tree.entry_pos_of_id(obj_id)
            self.tree.tombstone[pos] = 1
            self.tombstoned.add(obj_id)
            return
        raise UpdateError(f"id {obj_id} not found")

    def batch_update(self, inserts=(), deletes=()):
        """Apply many mutations with at most one rebuild at the end."""
        for obj_id in deletes:
            self.delete(obj_id)
        for obj_id, payload in inserts:
            obj_id = int(obj_id)
            if obj_id in self.pending:
                raise UpdateError(f"id {obj_id} already pending")
            if self._indexed(obj_id) and obj_id not in self.tombstoned:
                raise UpdateError(f"id {obj_id} already live in the index")
            self.pending[obj_id] = payload
        if len(self.pending) > self.cache_capacity:
            self.flush_rebuild()

    def flush_rebuild(self):
        """Fold tombstones and pending inserts into a fresh bulk build."""
        objs = [DataObject(i, p) for i, p in self.live_objects()]
        dataset = Dataset.from_objects(objs, self.metric)
        self.tree = build(dataset, self.config, self.rt)
        self.pending = {}
        self.tombstoned = set()
        self.rebuild_count += 1

    def _indexed(self, obj_id):
        ids = self.dataset.ids
        i = np.searchsorted(ids, obj_id)
        return i < ids.size and ids[i] == obj_id

    # -- queries -----------------------------------------------------------

    def query_range(self, payloads, radii, pruning=True):
        """Exact range search over live objects; see BatchSearcher."""
        searcher = self._searcher(pruning)
        answers, stats = searcher.range_batch(payloads, radii)
        radii = searcher._broadcast(radii, len(payloads), "radius")
        merged = []
        for q, (ids, d) in enumerate(answers):
            cids, cd = self._scan_cache(payloads[q])
            hit = cd <= radii[q]
            ids = np.concatenate([ids, cids[hit]])
            d = np.concatenate([d, cd[hit]])
            order = np.lexsort((ids, d))
            merged.append((ids[order], d[order]))
        return merged, stats

    def query_knn(self, payloads, ks, pruning=True):
        """Exact k-NN search over live objects; see BatchSearcher."""
        searcher = self._searcher(pruning)
        answers, stats = searcher.knn_batch(payloads, ks)
        ks = np.atleast_1d(np.asarray(ks, dtype=np.int64))
        if ks.size == 1:
            ks = np.full(len(payloads), int(ks[0]), dtype=np.int64)
        merged = []
        for q, (ids, d) in enumerate(answers):
            cids, cd = self._scan_cache(payloads[q])
            ids = np.concatenate([ids, cids])
            d = np.concatenate([d, cd])
            order = np.lexsort((ids, d))[: int(ks[q])]
            merged.append((ids[order], d[order]))
        return merged, stats

    def _searcher(self, pruning):
        return BatchSearcher(
            self.tree,
            runtime=self.rt,
            memory_units=self.memory_units,
            pruning=pruning,
        )

    def _scan_cache(self, payload):
        if not self.pending:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        items = sorted(self.pending.items())
        ids = np.array([i for i, _ in items], dtype=np.int64)
        d = np.array(
            [distance(self.metric, payload, p) for _, p in items],
            dtype=np.float64,
        )
        return ids, d
