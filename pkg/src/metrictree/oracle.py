"""Exhaustive reference search used to cross-check the tree engine.

Deliberately shares no traversal or pruning code with the index: every
query scans the whole dataset.  The CLI uses these to verify engine
answers on demand, and the test suite uses them as the source of truth.
"""

from __future__ import annotations

import math

import numpy as np


class OracleMismatch(AssertionError):
    """Engine answers disagree with the exhaustive reference."""


def brute_range(dataset, payload, radius, excluded=frozenset()):
    """All (ids, distances) within radius, sorted by (distance, id)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    ids, d = _scan(dataset, payload, excluded)
    hit = d <= radius
    ids, d = ids[hit], d[hit]
    order = np.lexsort((ids, d))
    return ids[order], d[order]


def brute_knn(dataset, payload, k, excluded=frozenset()):
    """The k smallest (distance, id) pairs, ties broken by id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ids, d = _scan(dataset, payload, excluded)
    order = np.lexsort((ids, d))[:k]
    return ids[order], d[order]


def _scan(dataset, payload, excluded):
    rows = np.arange(dataset.n, dtype=np.int64)
    ids = dataset.ids
    if excluded:
        keep = ~np.isin(ids, np.fromiter(excluded, dtype=np.int64, count=len(excluded)))
        rows, ids = rows[keep], ids[keep]
    prepared = dataset.prepare_query(payload)
    d = dataset.one_to_many(prepared, rows)
    return ids, d


def answers_match(kind, got, want, rel_tol=1e-9):
    """Compare engine answers against reference answers.

    Range answers must agree as id sets with matching distances; k-NN
    answers must agree as distance multisets (ids may differ only when
    distances tie exactly).
    """
    got_ids, got_d = got
    want_ids, want_d = want
    if kind == "range":
        if set(map(int, got_ids)) != set(map(int, want_ids)):
            return False
        by_id = dict(zip(map(int, want_ids), map(float, want_d)))
        return all(
            math.isclose(float(d), by_id[int(i)], rel_tol=rel_tol, abs_tol=rel_tol)
            for i, d in zip(got_ids, got_d)
        )
    if got_d.size != want_d.size:
        return False
    return all(
        math.isclose(float(a), float(b), rel_tol=rel_tol, abs_tol=rel_tol)
        for a, b in zip(np.sort(got_d), np.sort(want_d))
    )
