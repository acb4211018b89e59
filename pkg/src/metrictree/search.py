"""Batched exact range and k-NN search over a flattened pivot tree.

Queries descend the tree level by level as one table of (query, node)
rows.  Triangle-inequality tests against per-node pivot ranges prune child
nodes; at the leaves the pivot distances filter individual entries before
any real distance evaluation.  A memory budget bounds the size of the one
materialized row table at any time: queries are packed into groups whose
expansion cannot overflow, and a query too large for any group is chunked.

k-NN search keeps a per-query witness pool of the best k (distance, id)
pairs seen anywhere, pivots included.  The pruning bound is the pool's
k-th distance, so ties at the bound can never lose an answer the pool does
not already witness; this keeps k-th distances binary-exact for integer
metrics even with the non-strict pruning inequalities.
"""

from __future__ import annotations

import numpy as np

from .runtime import DEFAULT_MEMORY_UNITS, BudgetError, MemoryBudget, ParallelRuntime
from .tree import ROOT_ID, child_node_id, encode_keys

RANGE = "range"
KNN = "knn"


def object_prunable(entry_dis, dqp, radius):
    """True when a leaf entry cannot lie within radius of the query.

    entry_dis is the entry's stored distance to the leaf pivot and dqp the
    query's distance to that pivot; the triangle inequality bounds the true
    distance from below by their absolute difference.
    """
    return abs(entry_dis - dqp) > radius


def node_prunable_range(dqp, radius, min_dis, max_dis):
    """True when no object of a node can lie within radius of the query."""
    return dqp + radius < min_dis or dqp - radius > max_dis


def node_prunable_knn(dqp, bound, min_dis, max_dis):
    """True when no object of a node can improve a k-NN bound.

    Non-strict on purpose: an object at exactly the bound cannot beat the
    witnesses already at the bound, so it is safe to drop.
    """
    return dqp + bound <= min_dis or dqp - bound >= max_dis


def current_kth_bound(sorted_dis, k):
    """k-th smallest of an ascending distance array, +inf when short."""
    if k < 1:
        raise ValueError("k must be >= 1")
    arr = np.asarray(sorted_dis, dtype=np.float64)
    return float(arr[k - 1]) if arr.size >= k else float("inf")


def level_size_limit(capacity, node_capacity, split_rounds, layer):
    """Row budget for one query group at a given split layer.

    Shallow layers get smaller shares so that the deepest expansion, which
    multiplies rows by the fan-out once per remaining layer, still fits:
    max(1, capacity // ((split_rounds - layer + 1) * node_capacity)).
    """
    if not 1 <= layer <= split_rounds:
        raise ValueError(f"layer {layer} outside [1, {split_rounds}]")
    share = capacity // ((split_rounds - layer + 1) * node_capacity)
    return max(1, share)


def compute_query_groups(row_counts, size_limit):
    """Pack queries into groups whose total row count fits the limit.

    Greedy first fit in ascending query order: each query joins the first
    group it fits into, else opens a new one.  A query larger than the
    limit gets a group of its own and is chunked downstream.

    Returns a list of groups, each a list of indices into row_counts.
    """
    groups = []
    loads = []
    for q, count in enumerate(row_counts):
        placed = False
        for g, load in enumerate(loads):
            if load + count <= size_limit:
                groups[g].append(q)
                loads[g] = load + count
                placed = True
                break
        if not placed:
            groups.append([q])
            loads.append(count)
    return groups


class SearchStats:
    """Per-query work counters for one batch call."""

    def __init__(self, nq):
        self.verified = np.zeros(nq, dtype=np.int64)
        self.pruned_nodes = np.zeros(nq, dtype=np.int64)
        self.size_limits = {}
        self.peak_units = 0

    @property
    def total_verified(self):
        return int(self.verified.sum())

    @property
    def total_pruned(self):
        return int(self.pruned_nodes.sum())


class _KnnPool:
    """Best-k (distance, id) witnesses for one query, deduplicated by id."""

    __slots__ = ("k", "d", "ids", "idset", "excluded")

    def __init__(self, k, excluded):
        self.k = k
        self.d = np.empty(0, dtype=np.float64)
        self.ids = np.empty(0, dtype=np.int64)
        self.idset = set()
        self.excluded = excluded

    def merge(self, dvals, ids):
        take = [
            t
            for t in range(len(ids))
            if ids[t] not in self.idset and ids[t] not in self.excluded
        ]
        if not take:
            return
        nd = np.concatenate([self.d, np.asarray(dvals, dtype=np.float64)[take]])
        nids = np.concatenate([self.ids, np.asarray(ids, dtype=np.int64)[take]])
        order = np.lexsort((nids, nd))[: self.k]
        self.d = nd[order]
        self.ids = nids[order]
        self.idset = set(int(i) for i in self.ids)

    def bound(self):
        return current_kth_bound(self.d, self.k)


class _Table:
    """One level's (query, node, pivot-distance) rows, in canonical order."""

    __slots__ = ("q", "node", "dqp")

    def __init__(self, q, node, dqp):
        self.q = q
        self.node = node
        self.dqp = dqp

    @property
    def rows(self):
        return self.q.size

    def slice(self, sl):
        return _Table(self.q[sl], self.node[sl], self.dqp[sl])

    @staticmethod
    def concat(parts):
        return _Table(
            np.concatenate([p.q for p in parts]),
            np.concatenate([p.node for p in parts]),
            np.concatenate([p.dqp for p in parts]),
        )


def _query_runs(q):
    """(value, start, stop) triples for maximal runs of a sorted array."""
    if q.size == 0:
        return []
    cuts = np.flatnonzero(q[1:] != q[:-1]) + 1
    bounds = np.concatenate([[0], cuts, [q.size]])
    return [
        (int(q[bounds[t]]), int(bounds[t]), int(bounds[t + 1]))
        for t in range(bounds.size - 1)
    ]


class _Ctx:
    """Mutable state shared by one batch call."""

    __slots__ = (
        "mode",
        "prepared",
        "radii",
        "pools",
        "budget",
        "capacity",
        "stats",
        "excluded",
        "acc_ids",
        "acc_dis",
    )

    def __init__(self, mode, prepared, radii, pools, budget, capacity, stats, excluded):
        self.mode = mode
        self.prepared = prepared
        self.radii = radii
        self.pools = pools
        self.budget = budget
        self.capacity = capacity
        self.stats = stats
        self.excluded = excluded
        self.acc_ids = [[] for _ in prepared]
        self.acc_dis = [[] for _ in prepared]


class BatchSearcher:
    """Exact batch query engine over one FlatPivotTree.

    Args:
        tree: a built FlatPivotTree.
        runtime: ParallelRuntime; single worker by default.
        memory_units: row budget for the active table (>= fan-out).
        pruning: False switches to full verification of every live entry,
            for measuring how much work pruning saves.
    """

    def __init__(self, tree, runtime=None, memory_units=None, pruning=True):
        self.tree = tree
        self.ds = tree.dataset
        self.rt = runtime or ParallelRuntime(workers=1)
        self.capacity = int(memory_units or DEFAULT_MEMORY_UNITS)
        self.pruning = pruning
        if tree.n > 0 and self.capacity < tree.nc:
            raise BudgetError(
                f"memory_units {self.capacity} below fan-out {tree.nc}"
            )

    # -- public API --------------------------------------------------------

    def range_batch(self, payloads, radii):
        """Exact range search for a batch of query payloads.

        Returns (answers, stats); answers[i] is an (ids, distances) pair
        sorted by (distance, id), containing every live object within the
        i-th radius.
        """
        radii = self._broadcast(radii, len(payloads), "radius")
        if np.any(radii < 0):
            raise ValueError("radius must be >= 0")
        return self._search(RANGE, payloads, radii, None)

    def knn_batch(self, payloads, ks):
        """Exact k-nearest-neighbor search for a batch of query payloads.

        Returns (answers, stats); answers[i] holds the k smallest
        (distance, id) pairs over live objects, fewer when the index holds
        fewer live objects.
        """
        ks = self._broadcast(ks, len(payloads), "k").astype(np.int64)
        if np.any(ks < 1):
            raise ValueError("k must be >= 1")
        return self._search(KNN, payloads, None, ks)

    @staticmethod
    def _broadcast(value, nq, what):
        arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if arr.size == 1:
            return np.full(nq, float(arr[0]))
        if arr.size != nq:
            raise ValueError(f"{what} list length {arr.size} != {nq} queries")
        return arr.astype(np.float64)

    # -- driver ------------------------------------------------------------

    def _search(self, mode, payloads, radii, ks):
        tree = self.tree
        nq = len(payloads)
        stats = SearchStats(nq)
        empty = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
        if nq == 0 or tree.levels == 0:
            return [empty] * nq, stats
        prepared = [self.ds.prepare_query(p) for p in payloads]
        excluded = set(
            int(i) for i in self.ds.ids[tree.rows[tree.tombstone == 1]]
        )
        budget = MemoryBudget(self.capacity)
        pools = None
        if mode == KNN:
            pools = [_KnnPool(int(k), excluded) for k in ks]
        ctx = _Ctx(mode, prepared, radii, pools, budget, self.capacity, stats, excluded)

        if not self.pruning:
            self._scan_all(ctx)
        else:
            root = self._root_table(ctx)
            self._process(root, 1, 0, ctx)
        stats.peak_units = budget.peak
        return self._collect(ctx), stats

    def _collect(self, ctx):
        out = []
        if ctx.mode == KNN:
            for pool in ctx.pools:
                out.append((pool.ids.copy(), pool.d.copy()))
            return out
        for q in range(len(ctx.prepared)):
            if ctx.acc_ids[q]:
                ids = np.concatenate(ctx.acc_ids[q])
                dis = np.concatenate(ctx.acc_dis[q])
                order = np.lexsort((ids, dis))
                out.append((ids[order], dis[order]))
            else:
                out.append(
                    (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
                )
        return out

    def _root_table(self, ctx):
        tree = self.tree
        nq = len(ctx.prepared)
        prow = np.array([tree.pivot_row[ROOT_ID]], dtype=np.int64)
        dqp = np.empty(nq, dtype=np.float64)

        def body(q):
            dqp[q] = self.ds.one_to_many(ctx.prepared[q], prow)[0]

        self.rt.parallel_for(nq, body)
        if ctx.mode == KNN:
            pid = int(tree.pivot_id[ROOT_ID])
            for q in range(nq):
                ctx.pools[q].merge(dqp[q : q + 1], [pid])
        return _Table(
            np.arange(nq, dtype=np.int64),
            np.full(nq, ROOT_ID, dtype=np.int64),
            dqp,
        )

    # -- full-scan fallback (pruning disabled) -----------------------------

    def _scan_all(self, ctx):
        tree = self.tree
        alive = tree.tombstone == 0
        rows = tree.rows[alive]
        ids = self.ds.ids[rows]
        nq = len(ctx.prepared)

        def body(q):
            d = self.ds.one_to_many(ctx.prepared[q], rows)
            ctx.stats.verified[q] = rows.size
            if ctx.mode == RANGE:
                hit = d <= ctx.radii[q]
                ctx.acc_ids[q].append(ids[hit])
                ctx.acc_dis[q].append(d[hit])
            else:
                ctx.pools[q].merge(d, ids)

        self.rt.parallel_for(nq, body)

    # -- budgeted descent --------------------------------------------------

    def _process(self, tab, layer, reserved, ctx):
        """Consume one materialized table at a given tree level."""
        if tab.rows == 0:
            if reserved:
                ctx.budget.release(reserved)
            return
        if layer == self.tree.levels:
            self._verify(tab, ctx)
            if reserved:
                ctx.budget.release(reserved)
            return
        # Split-at-pop: the parent table leaves the budget once its rows
        # are staged into groups; only the next materialized table counts.
        if reserved:
            ctx.budget.release(reserved)
        s = level_size_limit(
            ctx.capacity, self.tree.nc, self.tree.split_rounds, layer
        )
        ctx.stats.size_limits.setdefault(layer, s)
        runs = _query_runs(tab.q)
        counts = [stop - start for (_, start, stop) in runs]
        groups = compute_query_groups(counts, s)
        for group in groups:
            total = sum(counts[g] for g in group)
            if len(group) == 1 and total > s:
                _, start, stop = runs[group[0]]
                for off in range(start, stop, s):
                    part = tab.slice(slice(off, min(off + s, stop)))
                    self._expand_into(part, layer, ctx)
            else:
                parts = [
                    tab.slice(slice(runs[g][1], runs[g][2])) for g in group
                ]
                self._expand_into(_Table.concat(parts), layer, ctx)

    def _expand_into(self, part, layer, ctx):
        child = self._expand(part, layer, ctx)
        if child.rows == 0:
            return
        if not ctx.budget.try_reserve(child.rows):
            raise BudgetError(
                f"table of {child.rows} rows overflows budget "
                f"{ctx.budget.capacity} (in use {ctx.budget.in_use})"
            )
        self._process(child, layer + 1, child.rows, ctx)

    def _expand(self, part, layer, ctx):
        """Expand parent rows at `layer` into surviving child rows."""
        tree = self.tree
        nc = tree.nc
        child_level = layer + 1
        own_ranges = child_level == tree.levels
        if ctx.mode == KNN:
            bounds = np.array([p.bound() for p in ctx.pools])
        runs = _query_runs(part.q)
        out = [None] * len(runs)
        pruned = np.zeros(len(runs), dtype=np.int64)

        def body(t):
            qv, start, stop = runs[t]
            nodes = part.node[start:stop]
            pdqp = part.dqp[start:stop]
            first = (nodes - 1) * nc + 2
            cand = first[:, None] + np.arange(nc, dtype=np.int64)[None, :]
            sizes = tree.size[cand]
            keep = sizes > 0
            if not own_ranges:
                # Internal children carry ranges to the parent pivot, so the
                # parent distance screens them before any new evaluation.
                minv = tree.min_dis[cand]
                maxv = tree.max_dis[cand]
                dq = pdqp[:, None]
                if ctx.mode == RANGE:
                    r = ctx.radii[qv]
                    keep &= (dq + r >= minv) & (dq - r <= maxv)
                else:
                    b = bounds[qv]
                    keep &= (dq + b > minv) & (dq - b < maxv)
            pruned[t] = int((sizes > 0).sum() - keep.sum())
            cnodes = cand[keep]
            cpd = np.broadcast_to(pdqp[:, None], cand.shape)[keep]
            if cnodes.size:
                prows = tree.pivot_row[cnodes]
                cd = self.ds.one_to_many(ctx.prepared[qv], prows)
            else:
                cd = np.empty(0, dtype=np.float64)
            out[t] = (
                np.full(cnodes.size, qv, dtype=np.int64),
                cnodes,
                cd,
                cpd,
            )

        self.rt.parallel_for(len(runs), body)
        cq = np.concatenate([o[0] for o in out])
        cnode = np.concatenate([o[1] for o in out])
        cdqp = np.concatenate([o[2] for o in out])
        cpdqp = np.concatenate([o[3] for o in out])
        for t in range(len(runs)):
            ctx.stats.pruned_nodes[runs[t][0]] += pruned[t]
        if ctx.mode == KNN:
            self._merge_level(cq, cnode, cdqp, ctx)
            bounds = np.array([p.bound() for p in ctx.pools])
            ref = cdqp if own_ranges else cpdqp
            b = bounds[cq]
            minv = tree.min_dis[cnode]
            maxv = tree.max_dis[cnode]
            keep = (ref + b > minv) & (ref - b < maxv)
        elif own_ranges:
            r = ctx.radii[cq]
            minv = tree.min_dis[cnode]
            maxv = tree.max_dis[cnode]
            keep = (cdqp + r >= minv) & (cdqp - r <= maxv)
        else:
            keep = np.ones(cq.size, dtype=bool)
        if not keep.all():
            np.add.at(ctx.stats.pruned_nodes, cq[~keep], 1)
            cq, cnode, cdqp = cq[keep], cnode[keep], cdqp[keep]
        return _Table(cq, cnode, cdqp)

    def _merge_level(self, cq, cnode, cdqp, ctx):
        """Feed every new pivot distance of a level into its query's pool.

        A single ordinal-encoded sort makes each query's candidates one
        contiguous ascending segment, mirroring how the level tables are
        ordered during construction.
        """
        if cq.size == 0:
            return
        uniq = np.unique(cq)
        ordinals = np.searchsorted(uniq, cq)
        level_max = self.rt.parallel_max(cdqp)
        keys = encode_keys(cdqp, ordinals, level_max)
        perm = self.rt.sort_permutation(keys, cnode)
        sq = cq[perm]
        sd = cdqp[perm]
        spid = self.tree.pivot_id[cnode[perm]]
        for qv, start, stop in _query_runs(sq):
            ctx.pools[qv].merge(sd[start:stop], spid[start:stop])

    # -- leaf verification -------------------------------------------------

    def _verify(self, tab, ctx):
        if ctx.mode == RANGE:
            self._verify_range(tab, ctx)
        else:
            self._verify_knn(tab, ctx)

    def _verify_range(self, tab, ctx):
        tree = self.tree
        runs = _query_runs(tab.q)
        hit_ids = [None] * len(runs)
        hit_dis = [None] * len(runs)
        ver = np.zeros(len(runs), dtype=np.int64)

        def body(t):
            qv, start, stop = runs[t]
            r = ctx.radii[qv]
            picked = []
            for i in range(start, stop):
                node = int(tab.node[i])
                p = int(tree.pos[node])
                sl = slice(p, p + int(tree.size[node]))
                alive = tree.tombstone[sl] == 0
                keep = alive & (np.abs(tree.dis[sl] - tab.dqp[i]) <= r)
                picked.append(tree.rows[sl][keep])
            rows = np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)
            d = self.ds.one_to_many(ctx.prepared[qv], rows)
            hit = d <= r
            hit_ids[t] = self.ds.ids[rows][hit]
            hit_dis[t] = d[hit]
            ver[t] = rows.size

        self.rt.parallel_for(len(runs), body)
        for t in range(len(runs)):
            qv = runs[t][0]
            ctx.stats.verified[qv] += int(ver[t])
            if hit_ids[t].size:
                ctx.acc_ids[qv].append(hit_ids[t])
                ctx.acc_dis[qv].append(hit_dis[t])

    def _verify_knn(self, tab, ctx):
        tree = self.tree
        runs = _query_runs(tab.q)
        ver = np.zeros(len(runs), dtype=np.int64)

        def body(t):
            qv, start, stop = runs[t]
            pool = ctx.pools[qv]
            count = 0
            for i in range(start, stop):
                node = int(tab.node[i])
                dqp = tab.dqp[i]
                bound = pool.bound()
                p = int(tree.pos[node])
                sl = slice(p, p + int(tree.size[node]))
                alive = tree.tombstone[sl] == 0
                if np.isinf(bound):
                    keep = alive
                else:
                    keep = alive & (np.abs(tree.dis[sl] - dqp) < bound)
                rows = tree.rows[sl][keep]
                if rows.size == 0:
                    continue
                d = self.ds.one_to_many(ctx.prepared[qv], rows)
                pool.merge(d, self.ds.ids[rows])
                count += rows.size
            ver[t] = count

        self.rt.parallel_for(len(runs), body)
        for t in range(len(runs)):
            ctx.stats.verified[runs[t][0]] += ver[t]
