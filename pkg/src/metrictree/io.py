"""Snapshot serialization, workload files, and result records.

Snapshots are little-endian binary images of a built index together with
its dataset, so a snapshot alone is enough to answer queries.  The layout
is fixed-order and padding-free, which makes identical trees byte-identical
on disk regardless of how many workers built them.

Workload files are line oriented: "R <radius> <payload...>" for range
queries, "K <k> <payload...>" for k-NN, "I <id> <payload...>" for inserts
and "D <id>" for deletes.  Results are emitted as JSON lines.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from . import metrics
from .data import Dataset, DatasetFormatError
from .tree import FlatPivotTree, TreeConfig, node_count_for

SNAPSHOT_MAGIC = b"GTSI"
SNAPSHOT_VERSION = 1

_HEADER = struct.Struct("<4sHBxqqqqqq")

_METRIC_CODES = {
    metrics.EDIT: 0,
    metrics.L1: 1,
    metrics.L2: 2,
    metrics.ANGULAR: 3,
}
_METRIC_NAMES = {v: k for k, v in _METRIC_CODES.items()}

NODE_DTYPE = np.dtype(
    [
        ("pivot_id", "<i8"),
        ("min_dis", "<f8"),
        ("max_dis", "<f8"),
        ("pos", "<i8"),
        ("size", "<i8"),
    ]
)

TABLE_DTYPE = np.dtype(
    [
        ("object_id", "<i8"),
        ("dis", "<f8"),
        ("tombstone", "<u1"),
    ]
)


class SnapshotFormatError(ValueError):
    """Bad magic, unsupported version, or truncated snapshot."""


def save_snapshot(tree, path):
    """Write a built index (and its dataset) to a binary snapshot file."""
    ds = tree.dataset
    node_count = tree.node_count
    header = _HEADER.pack(
        SNAPSHOT_MAGIC,
        SNAPSHOT_VERSION,
        _METRIC_CODES[ds.metric],
        int(tree.config.seed),
        int(ds.n),
        int(tree.config.node_capacity),
        int(tree.levels),
        int(tree.split_rounds),
        int(tree.max_h),
    )
    nodes = np.empty(node_count, dtype=NODE_DTYPE)
    nodes["pivot_id"] = tree.pivot_id[1:]
    nodes["min_dis"] = tree.min_dis[1:]
    nodes["max_dis"] = tree.max_dis[1:]
    nodes["pos"] = tree.pos[1:]
    nodes["size"] = tree.size[1:]
    table = np.empty(ds.n, dtype=TABLE_DTYPE)
    table["object_id"] = tree.object_ids
    table["dis"] = tree.dis
    table["tombstone"] = tree.tombstone
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(nodes.tobytes())
        fh.write(table.tobytes())
        fh.write(ds.ids.astype("<i8").tobytes())
        _write_payloads(fh, ds)


def _write_payloads(fh, ds):
    if ds.metric in metrics.STRING_METRICS:
        blobs = [s.encode("utf-8") for s in ds.store.strings]
        offsets = np.zeros(len(blobs) + 1, dtype="<i8")
        np.cumsum([len(b) for b in blobs], out=offsets[1:])
        fh.write(offsets.tobytes())
        fh.write(b"".join(blobs))
    else:
        dim = ds.dim if ds.n else 0
        fh.write(struct.pack("<q", int(dim)))
        fh.write(ds.store.mat.astype("<f8").tobytes())


def load_snapshot(path):
    """Read a snapshot back into a FlatPivotTree (dataset included)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise SnapshotFormatError("snapshot truncated before header")
    magic, version, mcode, seed, n, nc, levels, split_rounds, max_h = _HEADER.unpack_from(
        buf, 0
    )
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if mcode not in _METRIC_NAMES:
        raise SnapshotFormatError(f"unknown metric code {mcode}")
    metric = _METRIC_NAMES[mcode]
    node_count = node_count_for(levels, nc) if levels > 0 else 0

    off = _HEADER.size
    nodes, off = _take(buf, off, NODE_DTYPE, node_count)
    table, off = _take(buf, off, TABLE_DTYPE, n)
    ids, off = _take(buf, off, np.dtype("<i8"), n)
    ds, off = _read_payloads(buf, off, metric, ids, n)
    if off != len(buf):
        raise SnapshotFormatError(f"{len(buf) - off} trailing bytes")

    tree = FlatPivotTree(TreeConfig(node_capacity=int(nc), seed=int(seed)), ds)
    tree.levels = int(levels)
    tree.split_rounds = int(split_rounds)
    tree.max_h = int(max_h)
    tree._alloc_nodes(node_count)
    if node_count:
        tree.pivot_id[1:] = nodes["pivot_id"]
        tree.min_dis[1:] = nodes["min_dis"]
        tree.max_dis[1:] = nodes["max_dis"]
        tree.pos[1:] = nodes["pos"]
        tree.size[1:] = nodes["size"]
        assigned = tree.pivot_id >= 0
        tree.pivot_row[assigned] = ds.rows_of_ids(tree.pivot_id[assigned])
    if n:
        tree.rows = ds.rows_of_ids(table["object_id"])
        tree.dis = table["dis"].astype(np.float64)
        tree.tombstone = table["tombstone"].astype(np.uint8)
    return tree


def _take(buf, off, dtype, count):
    nbytes = dtype.itemsize * count
    if off + nbytes > len(buf):
        raise SnapshotFormatError("snapshot truncated")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off)
    return arr, off + nbytes


def _read_payloads(buf, off, metric, ids, n):
    if metric in metrics.STRING_METRICS:
        offsets, off = _take(buf, off, np.dtype("<i8"), n + 1)
        blob_len = int(offsets[-1]) if n else 0
        if off + blob_len > len(buf):
            raise SnapshotFormatError("snapshot truncated in string payloads")
        blob = buf[off : off + blob_len]
        off += blob_len
        strings = [
            blob[offsets[i] : offsets[i + 1]].decode("utf-8") for i in range(n)
        ]
        return Dataset.from_strings(strings, metric, ids=ids), off
    if off + 8 > len(buf):
        raise SnapshotFormatError("snapshot truncated before vector header")
    (dim,) = struct.unpack_from("<q", buf, off)
    off += 8
    mat, off = _take(buf, off, np.dtype("<f8"), n * dim)
    return Dataset.from_vectors(mat.reshape(n, dim), metric, ids=ids), off


def file_sha256(path):
    """Hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- workloads --------------------------------------------------------------

OP_RANGE = "range"
OP_KNN = "knn"
OP_INSERT = "insert"
OP_DELETE = "delete"


def payload_from_tokens(metric, tokens, lineno=None):
    """Decode payload tokens for a metric: floats for vectors, one word."""
    if metric in metrics.STRING_METRICS:
        if len(tokens) != 1:
            raise DatasetFormatError(
                f"expected one string payload token, found {len(tokens)}",
                line=lineno,
            )
        return tokens[0]
    if not tokens:
        raise DatasetFormatError("missing vector payload", line=lineno)
    try:
        return np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise DatasetFormatError(
            f"not a number in payload {' '.join(tokens)!r}", line=lineno
        ) from exc


def parse_workload(path, metric):
    """Parse a workload file into (op, value, payload) triples.

    Returns a list of tuples: ("range", radius, payload),
    ("knn", k, payload), ("insert", id, payload), ("delete", id, None).
    Blank lines and lines starting with "#" are skipped.
    """
    ops = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            tag = toks[0]
            if tag == "R":
                if len(toks) < 3:
                    raise DatasetFormatError("R needs a radius and a payload", line=lineno)
                try:
                    radius = float(toks[1])
                except ValueError as exc:
                    raise DatasetFormatError(f"bad radius {toks[1]!r}", line=lineno) from exc
                if radius < 0:
                    raise DatasetFormatError("radius must be >= 0", line=lineno)
                ops.append((OP_RANGE, radius, payload_from_tokens(metric, toks[2:], lineno)))
            elif tag == "K":
                if len(toks) < 3:
                    raise DatasetFormatError("K needs a count and a payload", line=lineno)
                try:
                    k = int(toks[1])
                except ValueError as exc:
                    raise DatasetFormatError(f"bad k {toks[1]!r}", line=lineno) from exc
                if k < 1:
                    raise DatasetFormatError("k must be >= 1", line=lineno)
                ops.append((OP_KNN, k, payload_from_tokens(metric, toks[2:], lineno)))
            elif tag == "I":
                if len(toks) < 3:
                    raise DatasetFormatError("I needs an id and a payload", line=lineno)
                obj_id = _parse_id(toks[1], lineno)
                ops.append((OP_INSERT, obj_id, payload_from_tokens(metric, toks[2:], lineno)))
            elif tag == "D":
                if len(toks) != 2:
                    raise DatasetFormatError("D takes exactly an id", line=lineno)
                ops.append((OP_DELETE, _parse_id(toks[1], lineno), None))
            else:
                raise DatasetFormatError(f"unknown op tag {tag!r}", line=lineno)
    return ops


def _parse_id(tok, lineno):
    try:
        obj_id = int(tok)
    except ValueError as exc:
        raise DatasetFormatError(f"bad object id {tok!r}", line=lineno) from exc
    if obj_id < 0:
        raise DatasetFormatError("object ids must be >= 0", line=lineno)
    return obj_id


# -- results ----------------------------------------------------------------


def result_record(query_index, kind, ids, distances, verified, pruned):
    """One result line as a JSON-serializable dict."""
    return {
        "query_index": int(query_index),
        "kind": kind,
        "answers": [
            {"id": int(i), "distance": float(d)} for i, d in zip(ids, distances)
        ],
        "verified_count": int(verified),
        "pruned_nodes": int(pruned),
    }


def write_results(records, fh):
    """Write result records as JSON lines."""
    for rec in records:
        fh.write(json.dumps(rec, separators=(", ", ": ")) + "\n")


def read_results(path):
    """Read a JSON-lines results file back into dicts."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
