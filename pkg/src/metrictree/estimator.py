"""Scikit-learn style estimator facade over the pivot-tree index.

MetricTreeNeighbors mirrors the NearestNeighbors API (fit, kneighbors,
radius_neighbors) while answering exactly under any of the supported
metrics, including edit distance on string payloads.  Streaming insert
and remove calls delegate to the underlying cache-and-rebuild layer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import metrics
from .data import Dataset
from .runtime import ParallelRuntime
from .tree import TreeConfig
from .updates import DEFAULT_CACHE_CAPACITY, StreamingIndex


class MetricTreeNeighbors(BaseEstimator):
    """Exact neighbor queries in a general metric space.

    Args:
        metric: "l1", "l2", "angular", or "edit".
        node_capacity: tree fan-out (>= 2).
        n_neighbors: default k for kneighbors.
        radius: default radius for radius_neighbors.
        random_state: seed for the root pivot draw.
        workers: worker threads for build and search.
        memory_units: search-time row budget (None for the default).
        cache_capacity: pending inserts tolerated before a rebuild.
    """

    def __init__(
        self,
        metric="l2",
        node_capacity=20,
        n_neighbors=5,
        radius=1.0,
        random_state=0,
        workers=1,
        memory_units=None,
        cache_capacity=DEFAULT_CACHE_CAPACITY,
    ):
        self.metric = metric
        self.node_capacity = node_capacity
        self.n_neighbors = n_neighbors
        self.radius = radius
        self.random_state = random_state
        self.workers = workers
        self.memory_units = memory_units
        self.cache_capacity = cache_capacity

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y=None):
        """Index the payloads in X; ids are their positions in X."""
        if self.metric not in metrics.METRIC_KINDS:
            raise ValueError(f"unknown metric kind: {self.metric!r}")
        if self.metric in metrics.STRING_METRICS:
            payloads = self._check_strings(X)
            dataset = Dataset.from_strings(payloads, self.metric)
            self.n_features_in_ = None
        else:
            X = check_array(X, dtype=np.float64)
            dataset = Dataset.from_vectors(X, self.metric)
            self.n_features_in_ = X.shape[1]
        config = TreeConfig(
            node_capacity=int(self.node_capacity), seed=int(self.random_state)
        )
        runtime = ParallelRuntime(workers=self.workers)
        self.index_ = StreamingIndex(
            dataset,
            config=config,
            runtime=runtime,
            cache_capacity=int(self.cache_capacity),
            memory_units=self.memory_units,
        )
        self.n_samples_fit_ = dataset.n
        return self

    @staticmethod
    def _check_strings(X):
        payloads = list(X)
        for s in payloads:
            if not isinstance(s, str):
                raise ValueError("edit metric requires an iterable of str")
        return payloads

    def _check_queries(self, X):
        if self.metric in metrics.STRING_METRICS:
            return self._check_strings(X)
        X = check_array(X, dtype=np.float64)
        if self.n_features_in_ is not None and X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"query dimensionality {X.shape[1]} != fitted {self.n_features_in_}"
            )
        return [X[i] for i in range(X.shape[0])]

    # -- queries -----------------------------------------------------------

    def kneighbors(self, X, n_neighbors=None, return_distance=True):
        """Exact k nearest neighbors of each query payload.

        Returns (distances, indices) as (nq, k) arrays; indices are the
        positions passed to fit (plus any streamed inserts' ids).
        """
        check_is_fitted(self, "index_")
        k = int(n_neighbors if n_neighbors is not None else self.n_neighbors)
        if k < 1:
            raise ValueError("n_neighbors must be >= 1")
        live = self.index_.n_live
        if k > live:
            raise ValueError(f"n_neighbors {k} exceeds live object count {live}")
        payloads = self._check_queries(X)
        answers, _ = self.index_.query_knn(payloads, k)
        dist = np.empty((len(payloads), k), dtype=np.float64)
        ind = np.empty((len(payloads), k), dtype=np.int64)
        for q, (ids, d) in enumerate(answers):
            dist[q] = d
            ind[q] = ids
        return (dist, ind) if return_distance else ind

    def radius_neighbors(self, X, radius=None, return_distance=True):
        """All neighbors within a radius of each query payload.

        Returns (distances, indices) as object arrays of per-query arrays,
        each sorted by (distance, id).
        """
        check_is_fitted(self, "index_")
        r = float(radius if radius is not None else self.radius)
        if r < 0:
            raise ValueError("radius must be >= 0")
        payloads = self._check_queries(X)
        answers, _ = self.index_.query_range(payloads, r)
        dist = np.empty(len(payloads), dtype=object)
        ind = np.empty(len(payloads), dtype=object)
        for q, (ids, d) in enumerate(answers):
            dist[q] = d
            ind[q] = ids
        return (dist, ind) if return_distance else ind

    # -- streaming updates -------------------------------------------------

    def insert(self, obj_id, payload):
        """Add one payload under a caller-chosen integer id."""
        check_is_fitted(self, "index_")
        self.index_.insert(int(obj_id), self._check_queries([payload])[0])
        return self

    def remove(self, obj_id):
        """Remove one object by id."""
        check_is_fitted(self, "index_")
        self.index_.delete(int(obj_id))
        return self
