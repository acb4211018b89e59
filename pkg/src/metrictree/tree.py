"""Flattened pivot-tree index: arithmetic addressing and bulk construction.

The index is a complete Nc-ary tree stored as flat arrays.  Node ids start at
1 (the root); the j-th child of node i is node (i-1)*Nc + j + 1, so levels
occupy contiguous id ranges and need no pointers.  Objects live in one table
(a permutation of the dataset) cut into per-node segments; construction works
level by level: pick pivots, map every object to its node pivot, sort the
whole level with ordinal-encoded keys in a single global sort, then split
each segment into Nc child segments.  Leaves keep the final table and may be
overfull; they are never split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .runtime import ParallelRuntime

ROOT_ID = 1


class ConfigError(ValueError):
    """Invalid index configuration."""


class OrdinalError(ValueError):
    """Child ordinal or node ordinal out of range."""


class EncodeRangeError(ValueError):
    """Distance outside [0, level_max] passed to the key encoder."""


class EmptyNodeError(ValueError):
    """Pivot selection over an empty node."""


@dataclass(frozen=True)
class TreeConfig:
    """Build-time knobs.

    Args:
        node_capacity: fan-out Nc (>= 2); leaves larger than this stay whole.
        seed: RNG seed for the root pivot draw.
        store_leaf_only: keep only the final table (default); False retains a
            per-level history of (row order, distance) snapshots for debugging.
    """

    node_capacity: int = 20
    seed: int = 0
    store_leaf_only: bool = True

    def __post_init__(self):
        if self.node_capacity < 2:
            raise ConfigError("node_capacity must be >= 2")


def tree_height(n, nc):
    """(max_h, split_rounds) for n objects at fan-out nc.

    max_h is the theoretical height ceil(log_nc(n+1)) - 1, computed with
    integer arithmetic (smallest t with nc^t >= n+1) so exact powers never
    fall victim to float log rounding.  The number of splitting rounds is
    max(max_h - 1, 0); the built tree has split_rounds + 1 levels.
    """
    if nc < 2:
        raise ConfigError("node_capacity must be >= 2")
    if n < 1:
        raise ValueError("tree_height requires n >= 1")
    t = 0
    power = 1
    while power < n + 1:
        power *= nc
        t += 1
    max_h = t - 1
    return max_h, max(max_h - 1, 0)


def child_node_id(i, j, nc):
    """Id of the j-th (1-based) child of node i."""
    if not 1 <= j <= nc:
        raise OrdinalError(f"child ordinal {j} outside [1, {nc}]")
    if i < 1:
        raise OrdinalError(f"node id {i} outside the tree")
    return (i - 1) * nc + j + 1


def parent_node_id(i, nc):
    """Id of the parent of node i (i >= 2)."""
    if i < 2:
        raise OrdinalError("the root has no parent")
    return (i - 2) // nc + 1


def level_range(level, nc):
    """(first_id, count) of the node ids forming a 1-based level."""
    if level < 1:
        raise OrdinalError("levels are numbered from 1")
    count = nc ** (level - 1)
    first = (count - 1) // (nc - 1) + 1
    return first, count


def node_count_for(levels, nc):
    """Total nodes in a complete nc-ary tree of the given level count."""
    return (nc**levels - 1) // (nc - 1)


def encode_distance(dis, ordinal, level_max):
    """Pack (node ordinal, distance) into one sortable float key.

    The key is dis/(level_max+1) + ordinal: the integer part is the ordinal,
    the fraction the normalized distance, so a single global sort groups a
    whole level by node and orders each segment by distance.
    """
    if ordinal < 0:
        raise OrdinalError("node ordinal must be >= 0")
    if not 0.0 <= dis <= level_max:
        raise EncodeRangeError(f"distance {dis} outside [0, {level_max}]")
    return dis / (level_max + 1.0) + ordinal


def decode_distance(key, ordinal, level_max):
    """Inverse of encode_distance, within 1e-9 relative tolerance."""
    return (key - ordinal) * (level_max + 1.0)


def encode_keys(dis, ordinals, level_max):
    """Vectorized encode_distance over aligned arrays."""
    dis = np.asarray(dis, dtype=np.float64)
    if dis.size and (dis.min() < 0.0 or dis.max() > level_max):
        raise EncodeRangeError("distances outside [0, level_max]")
    return dis / (level_max + 1.0) + np.asarray(ordinals, dtype=np.float64)


class FlatPivotTree:
    """The built index: node arrays plus the object table.

    Attributes:
        config: TreeConfig used at build time.
        dataset: the indexed Dataset.
        levels: level count (split_rounds + 1); 0 for an empty dataset.
        max_h, split_rounds: the height figures from tree_height.
        pivot_id / pivot_row / min_dis / max_dis / pos / size: per-node arrays
            indexed by node id (slot 0 unused; pivot_id -1 means unassigned).
        rows: dataset-row permutation in table order.
        object_ids: ids aligned with rows.
        dis: distance of each table entry to its leaf pivot.
        tombstone: per-entry deletion marks (uint8).
        level_history: per-level (rows, dis) copies if store_leaf_only=False.
    """

    def __init__(self, config, dataset):
        self.config = config
        self.dataset = dataset
        self.levels = 0
        self.max_h = 0
        self.split_rounds = 0
        n = dataset.n
        self.rows = np.arange(n, dtype=np.int64)
        self.dis = np.zeros(n, dtype=np.float64)
        self.tombstone = np.zeros(n, dtype=np.uint8)
        self.level_history = []
        self._alloc_nodes(0)
        self._entry_pos = None

    def _alloc_nodes(self, count):
        self.pivot_id = np.full(count + 1, -1, dtype=np.int64)
        self.pivot_row = np.full(count + 1, -1, dtype=np.int64)
        self.min_dis = np.zeros(count + 1, dtype=np.float64)
        self.max_dis = np.zeros(count + 1, dtype=np.float64)
        self.pos = np.zeros(count + 1, dtype=np.int64)
        self.size = np.zeros(count + 1, dtype=np.int64)

    # -- basic views -------------------------------------------------------

    @property
    def n(self):
        return self.rows.size

    @property
    def node_count(self):
        return self.pivot_id.size - 1

    @property
    def nc(self):
        return self.config.node_capacity

    @property
    def object_ids(self):
        return self.dataset.ids[self.rows]

    def segment(self, node):
        p = self.pos[node]
        return self.rows[p : p + self.size[node]]

    def ancestor_pivot_ids(self, node):
        """Pivot ids along the ancestor chain, root first."""
        chain = []
        while node > ROOT_ID:
            node = parent_node_id(node, self.nc)
            chain.append(int(self.pivot_id[node]))
        chain.reverse()
        return chain

    def entry_pos_of_id(self, obj_id):
        """Table position of an object id."""
        if self._entry_pos is None:
            inv = np.empty(self.n, dtype=np.int64)
            inv[self.rows] = np.arange(self.n, dtype=np.int64)
            self._entry_pos = inv
        row = int(self.dataset.rows_of_ids([obj_id])[0])
        return int(self._entry_pos[row])


def select_pivot_fft(dataset, segment_rows, ancestor_rows, rng):
    """Pick a pivot row: farthest-first against the ancestor pivot chain.

    With no ancestors (the root) the pivot is a seeded-random member.
    Otherwise the member maximizing the minimum distance to every ancestor
    pivot wins, ties broken by smallest object id.
    """
    segment_rows = np.asarray(segment_rows, dtype=np.int64)
    if segment_rows.size == 0:
        raise EmptyNodeError("cannot select a pivot for an empty node")
    if len(ancestor_rows) == 0:
        return int(segment_rows[int(rng.integers(0, segment_rows.size))])
    mind = None
    for arow in ancestor_rows:
        prepared = dataset.prepare_query(dataset.payload(int(arow)))
        d = dataset.one_to_many(prepared, segment_rows)
        mind = d if mind is None else np.minimum(mind, d)
    best = mind.max()
    cand = segment_rows[mind == best]
    ids = dataset.ids[cand]
    return int(cand[np.argmin(ids)])


class _Builder:
    """Level-by-level construction over a private FlatPivotTree."""

    def __init__(self, dataset, config, runtime):
        self.ds = dataset
        self.cfg = config
        self.rt = runtime
        self.tree = FlatPivotTree(config, dataset)
        # Running min distance from each table entry to the pivots on its
        # ancestor chain, in table order; drives farthest-first selection.
        self.chain_min = None

    def run(self):
        tree, ds, nc = self.tree, self.ds, self.cfg.node_capacity
        n = ds.n
        if n == 0:
            return tree
        tree.max_h, tree.split_rounds = tree_height(n, nc)
        tree.levels = tree.split_rounds + 1
        tree._alloc_nodes(node_count_for(tree.levels, nc))
        tree.size[ROOT_ID] = n
        tree.pos[ROOT_ID] = 0
        self.rng = np.random.default_rng(self.cfg.seed)
        for layer in range(1, tree.split_rounds + 1):
            self._map_level(layer)
            self._sort_level(layer)
            self._spawn_children(layer)
            self._snapshot_level()
        self._map_level(tree.levels)
        self._sort_level(tree.levels)
        self._finalize_leaves()
        self._snapshot_level()
        return tree

    def _snapshot_level(self):
        if not self.cfg.store_leaf_only:
            self.tree.level_history.append((self.tree.rows.copy(), self.tree.dis.copy()))

    def _map_level(self, level):
        """Choose pivots for every node of the level and map its segment.

        Farthest-first selection reads the running min distance to each
        entry's ancestor pivot chain; mapping then evaluates the whole
        level's entry-to-own-pivot distances in one aligned kernel call.
        """
        tree = self.tree
        first, count = level_range(level, self.cfg.node_capacity)
        if level == 1:
            prow = int(tree.rows[int(self.rng.integers(0, tree.rows.size))])
            tree.pivot_row[ROOT_ID] = prow
            tree.pivot_id[ROOT_ID] = int(self.ds.ids[prow])
        else:
            nodes = [
                node
                for node in range(first, first + count)
                if tree.size[node] > 0
            ]

            def pick(t):
                node = nodes[t]
                p = int(tree.pos[node])
                sl = slice(p, p + int(tree.size[node]))
                sub = self.chain_min[sl]
                cand = tree.rows[sl][sub == sub.max()]
                ids = self.ds.ids[cand]
                prow = int(cand[np.argmin(ids)])
                tree.pivot_row[node] = prow
                tree.pivot_id[node] = int(self.ds.ids[prow])

            self.rt.parallel_for(len(nodes), pick)
        sizes = tree.size[first : first + count]
        entry_pivot = np.repeat(tree.pivot_row[first : first + count], sizes)
        tree.dis = self.ds.row_to_row(tree.rows, entry_pivot)
        if self.chain_min is None:
            self.chain_min = tree.dis.copy()
        else:
            np.minimum(self.chain_min, tree.dis, out=self.chain_min)

    def _sort_level(self, level):
        """One global (ordinal, distance) keyed sort over the whole level."""
        tree, nc = self.tree, self.cfg.node_capacity
        first, count = level_range(level, nc)
        sizes = tree.size[first : first + count]
        ordinals = np.repeat(np.arange(count, dtype=np.int64), sizes)
        level_max = self.rt.parallel_max(tree.dis) if tree.dis.size else 0.0
        keys = encode_keys(tree.dis, ordinals, level_max)
        perm = self.rt.sort_permutation(keys, self.ds.ids[tree.rows])
        # Gather the original distances through the permutation; arithmetic
        # decode would cost ~1e-12 relative error and break integer metrics.
        tree.rows = tree.rows[perm]
        tree.dis = tree.dis[perm]
        if level < tree.levels:
            # The chain array is dead after the leaf re-map.
            self.chain_min = self.chain_min[perm]

    def _spawn_children(self, level):
        """Cut each node's sorted segment into nc child segments.

        Children of one level occupy a contiguous id span, so all the
        per-child bookkeeping happens as flat array assignments.
        """
        tree, nc = self.tree, self.cfg.node_capacity
        first, count = level_range(level, nc)
        sizes = tree.size[first : first + count]
        pos = tree.pos[first : first + count]
        avg = sizes // nc
        csize = np.repeat(avg[:, None], nc, axis=1)
        csize[:, -1] = sizes - avg * (nc - 1)
        cpos = pos[:, None] + np.arange(nc, dtype=np.int64)[None, :] * avg[:, None]
        cfirst = (first - 1) * nc + 2
        span = slice(cfirst, cfirst + count * nc)
        tree.pos[span] = cpos.ravel()
        tree.size[span] = csize.ravel()
        self._set_ranges(cfirst, count * nc)

    def _finalize_leaves(self):
        """Leaf ranges come from the leaves' own pivots after the re-map."""
        first, count = level_range(self.tree.levels, self.cfg.node_capacity)
        self._set_ranges(first, count)

    def _set_ranges(self, first, count):
        tree = self.tree
        sizes = tree.size[first : first + count]
        pos = tree.pos[first : first + count]
        nonempty = np.flatnonzero(sizes > 0)
        tree.min_dis[first + nonempty] = tree.dis[pos[nonempty]]
        tree.max_dis[first + nonempty] = tree.dis[pos[nonempty] + sizes[nonempty] - 1]


def build(dataset, config=None, runtime=None):
    """Build a FlatPivotTree over a dataset.

    Args:
        dataset: Dataset to index (n may be 0; the empty index answers all
            queries with empty results).
        config: TreeConfig; defaults to TreeConfig().
        runtime: ParallelRuntime; a single-worker runtime is created if None.

    Returns:
        An immutable FlatPivotTree.
    """
    config = config or TreeConfig()
    if runtime is None:
        runtime = ParallelRuntime(workers=1)
    return _Builder(dataset, config, runtime).run()
