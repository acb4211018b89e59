"""Datasets: payload storage, file loaders, and synthetic generators.

A Dataset couples a metric kind with a payload store (a float64 matrix for
vector metrics, a packed code array for string metrics) and stable integer
object ids.  Ids are kept strictly increasing internally; loaders assign
0..n-1 in file order and rebuilds preserve caller-supplied ids in sorted
order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import metrics
from .metrics import (
    ANGULAR,
    EDIT,
    METRIC_KINDS,
    STRING_METRICS,
    VECTOR_METRICS,
    MetricMismatchError,
)

SEQUENCE_ALPHABET = "ACGTN"

FORMAT_WORDS = "words"
FORMAT_VECTORS = "vectors"
FORMAT_SEQUENCES = "sequences"
FORMAT_LOCATIONS = "locations"
DATASET_FORMATS = (FORMAT_WORDS, FORMAT_VECTORS, FORMAT_SEQUENCES, FORMAT_LOCATIONS)

_STRING_FORMATS = (FORMAT_WORDS, FORMAT_SEQUENCES)


class DatasetFormatError(ValueError):
    """Malformed dataset, workload, or update file.

    Attributes:
        line: 1-based line number of the offending input line, or None.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class DataObject:
    """One identified object: a stable id plus its raw payload."""

    id: int
    payload: object


class _VectorStore:
    """Row-major float64 matrix of vector payloads with cached norms."""

    kind = "vector"

    def __init__(self, mat):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2:
            raise MetricMismatchError("vector store requires a 2-D matrix")
        if not np.all(np.isfinite(mat)):
            raise MetricMismatchError("vector payloads contain non-finite values")
        self.mat = np.ascontiguousarray(mat)
        self._norms = None

    def __len__(self):
        return self.mat.shape[0]

    @property
    def dim(self):
        return self.mat.shape[1]

    @property
    def norms(self):
        if self._norms is None:
            self._norms = np.sqrt((self.mat * self.mat).sum(axis=1))
        return self._norms

    def payload(self, row):
        return self.mat[row].copy()

    def payloads(self, rows):
        return [self.mat[r].copy() for r in rows]

    def take(self, rows):
        return _VectorStore(self.mat[rows])


class _StringStore:
    """Packed int32 code points with offsets; keeps the original strings."""

    kind = "string"

    def __init__(self, strings):
        self.strings = list(strings)
        lengths = np.fromiter((len(s) for s in self.strings), dtype=np.int64, count=len(self.strings))
        self.offsets = np.zeros(len(self.strings) + 1, dtype=np.int64)
        np.cumsum(lengths, out=self.offsets[1:])
        if self.strings:
            blob = "".join(self.strings).encode("utf-32-le")
            self.codes = np.frombuffer(blob, dtype=np.int32)
        else:
            self.codes = np.empty(0, dtype=np.int32)

    def __len__(self):
        return len(self.strings)

    @property
    def dim(self):
        return None

    def payload(self, row):
        return self.strings[row]

    def payloads(self, rows):
        return [self.strings[r] for r in rows]

    def take(self, rows):
        return _StringStore([self.strings[r] for r in rows])


def _check_payload_kind(metric, store_kind):
    if metric in VECTOR_METRICS and store_kind != "vector":
        raise MetricMismatchError(f"metric {metric!r} requires vector payloads")
    if metric in STRING_METRICS and store_kind != "string":
        raise MetricMismatchError(f"metric {metric!r} requires string payloads")


class Dataset:
    """An ordered collection of payloads under one metric.

    Args:
        metric: one of metrics.METRIC_KINDS.
        store: internal payload store.
        ids: strictly increasing int64 array, one id per payload.
    """

    def __init__(self, metric, store, ids):
        if metric not in METRIC_KINDS:
            raise MetricMismatchError(f"unknown metric kind: {metric!r}")
        _check_payload_kind(metric, store.kind)
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size != len(store):
            raise ValueError("ids must be a 1-D array matching the payload count")
        if ids.size and (np.any(ids < 0) or np.any(np.diff(ids) <= 0)):
            raise ValueError("ids must be non-negative and strictly increasing")
        self.metric = metric
        self.store = store
        self.ids = ids

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_vectors(cls, mat, metric, ids=None):
        mat = np.atleast_2d(np.asarray(mat, dtype=np.float64))
        if ids is None:
            ids = np.arange(mat.shape[0], dtype=np.int64)
        return cls(metric, _VectorStore(mat), ids)

    @classmethod
    def from_strings(cls, strings, metric, ids=None):
        strings = list(strings)
        for s in strings:
            if not isinstance(s, str):
                raise MetricMismatchError("string dataset requires str payloads")
        if ids is None:
            ids = np.arange(len(strings), dtype=np.int64)
        return cls(metric, _StringStore(strings), ids)

    @classmethod
    def from_objects(cls, objects, metric):
        """Build from DataObjects; objects are put in ascending-id order."""
        objs = sorted(objects, key=lambda o: o.id)
        ids = np.array([o.id for o in objs], dtype=np.int64)
        payloads = [o.payload for o in objs]
        if metric in VECTOR_METRICS:
            if payloads:
                mat = np.asarray(payloads, dtype=np.float64)
            else:
                mat = np.empty((0, 0), dtype=np.float64)
            return cls(metric, _VectorStore(np.atleast_2d(mat)), ids)
        return cls(metric, _StringStore(payloads), ids)

    # -- basic access ------------------------------------------------------

    @property
    def n(self):
        return len(self.store)

    def __len__(self):
        return self.n

    @property
    def dim(self):
        return self.store.dim

    def payload(self, row):
        return self.store.payload(row)

    def object_at(self, row):
        return DataObject(int(self.ids[row]), self.store.payload(row))

    def rows_of_ids(self, wanted):
        """Map object ids to row indices (ids are sorted, so binary search)."""
        wanted = np.asarray(wanted, dtype=np.int64)
        rows = np.searchsorted(self.ids, wanted)
        if np.any(rows >= self.ids.size) or np.any(self.ids[np.minimum(rows, self.ids.size - 1)] != wanted):
            raise KeyError("unknown object id")
        return rows

    # -- distance kernels --------------------------------------------------

    def prepare_query(self, payload):
        """Pre-encode a query payload for repeated one_to_many calls."""
        if self.metric in STRING_METRICS:
            return metrics.encode_string(payload)
        v = metrics.as_vector(payload)
        if self.n and v.shape[0] != self.dim:
            raise MetricMismatchError(
                f"query dimensionality {v.shape[0]} != dataset dimensionality {self.dim}"
            )
        return v

    def one_to_many(self, prepared, rows):
        """Distances from a prepared query to the payloads at the given rows."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return np.empty(0, dtype=np.float64)
        if self.metric == EDIT:
            return metrics.edit_one_to_many(prepared, self.store.codes, self.store.offsets, rows)
        mat = self.store.mat[rows]
        if self.metric == metrics.L1:
            return metrics.l1_one_to_many(prepared, mat)
        if self.metric == metrics.L2:
            return metrics.l2_one_to_many(prepared, mat)
        return metrics.angular_one_to_many(prepared, mat, self.store.norms[rows])

    def row_to_row(self, rows_a, rows_b):
        """Distances between aligned row pairs, one kernel call."""
        rows_a = np.asarray(rows_a, dtype=np.int64)
        rows_b = np.asarray(rows_b, dtype=np.int64)
        if rows_a.size == 0:
            return np.empty(0, dtype=np.float64)
        if self.metric == EDIT:
            return metrics.edit_row_pairs(
                self.store.codes, self.store.offsets, rows_a, rows_b
            )
        a_mat = self.store.mat[rows_a]
        b_mat = self.store.mat[rows_b]
        if self.metric == metrics.L1:
            return metrics.l1_row_pairs(a_mat, b_mat)
        if self.metric == metrics.L2:
            return metrics.l2_row_pairs(a_mat, b_mat)
        return metrics.angular_row_pairs(
            a_mat, b_mat, self.store.norms[rows_a], self.store.norms[rows_b]
        )

    def pairwise(self, row_a, row_b):
        """Distance between two stored payloads."""
        prepared = self.prepare_query(self.store.payload(row_a))
        return float(self.one_to_many(prepared, np.array([row_b], dtype=np.int64))[0])

    def subset_rows(self, rows, ids=None):
        """New Dataset from selected rows, keeping ids unless overridden."""
        rows = np.asarray(rows, dtype=np.int64)
        if ids is None:
            ids = self.ids[rows]
        return Dataset(self.metric, self.store.take(rows), ids)


# -- file loading ----------------------------------------------------------


def _parse_header(line):
    """Parse an optional "# dim=<D> n=<N>" header; returns (dim, n) or None."""
    if not line.startswith("#"):
        return None
    fields = dict()
    for tok in line[1:].split():
        if "=" in tok:
            key, _, val = tok.partition("=")
            fields[key] = val
    try:
        dim = int(fields["dim"]) if "dim" in fields else None
        n = int(fields["n"]) if "n" in fields else None
    except ValueError as exc:
        raise DatasetFormatError(f"bad header: {line.strip()!r}", line=1) from exc
    return dim, n


def parse_vector_line(text, lineno, dim=None):
    toks = text.split()
    try:
        vals = [float(t) for t in toks]
    except ValueError as exc:
        raise DatasetFormatError(f"not a number in {text.strip()!r}", line=lineno) from exc
    if dim is not None and len(vals) != dim:
        raise DatasetFormatError(
            f"expected {dim} coordinates, found {len(vals)}", line=lineno
        )
    return vals

def default_metric_for(fmt):
    return {
        FORMAT_WORDS: EDIT,
        FORMAT_SEQUENCES: EDIT,
        FORMAT_VECTORS: metrics.L2,
        FORMAT_LOCATIONS: metrics.L2,
    }[fmt]


def load_dataset(path, fmt, metric=None):
    """Load a dataset file.

    Args:
        path: input file path.
        fmt: one of DATASET_FORMATS.
        metric: metric kind; defaults to a format-appropriate kind.

    Returns:
        Dataset with ids 0..n-1 in file order.

    Raises:
        DatasetFormatError: malformed content, with a 1-based line number.
    """
    if fmt not in DATASET_FORMATS:
        raise DatasetFormatError(f"unknown dataset format: {fmt!r}")
    if metric is None:
        metric = default_metric_for(fmt)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    declared_dim = declared_n = None
    start = 0
    if lines and lines[0].startswith("#"):
        header = _parse_header(lines[0])
        if header is not None:
            declared_dim, declared_n = header
            start = 1

    body = [(i + 1, ln) for i, ln in enumerate(lines) if i >= start and ln.strip()]

    if fmt in _STRING_FORMATS:
        strings = []
        for lineno, ln in body:
            tok = ln.strip()
            if fmt == FORMAT_SEQUENCES:
                bad = set(tok) - set(SEQUENCE_ALPHABET)
                if bad:
                    raise DatasetFormatError(
                        f"symbol(s) {sorted(bad)} outside alphabet {SEQUENCE_ALPHABET}",
                        line=lineno,
                    )
            elif len(tok.split()) != 1:
                raise DatasetFormatError("expected one token per line", line=lineno)
            strings.append(tok)
        ds = Dataset.from_strings(strings, metric)
    else:
        fixed_dim = 2 if fmt == FORMAT_LOCATIONS else declared_dim
        rows = []
        dim = fixed_dim
        for lineno, ln in body:
            vals = parse_vector_line(ln, lineno, dim)
            if dim is None:
                dim = len(vals)
            rows.append(vals)
        mat = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, dim or 0))
        ds = Dataset.from_vectors(mat, metric)

    if declared_n is not None and ds.n != declared_n:
        raise DatasetFormatError(f"header declares n={declared_n}, file has {ds.n}", line=1)
    if declared_dim is not None and ds.n and ds.dim != declared_dim:
        raise DatasetFormatError(f"header declares dim={declared_dim}, file has {ds.dim}", line=1)
    return ds


def save_dataset(dataset, path, fmt):
    """Write a dataset back out in one of the text formats."""
    with open(path, "w", encoding="utf-8") as fh:
        if fmt in _STRING_FORMATS:
            for s in dataset.store.strings:
                fh.write(s + "\n")
        else:
            fh.write(f"# dim={dataset.dim} n={dataset.n}\n")
            for row in dataset.store.mat:
                fh.write(" ".join(repr(float(x)) for x in row) + "\n")


# -- synthetic generation --------------------------------------------------


def generate_uniform(n, dim, seed, low=0.0, high=1.0):
    """Uniform vectors in [low, high)^dim."""
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(n, dim))


def generate_clustered(n, dim, clusters, seed, spread=0.01, box=1.0):
    """Gaussian clusters: seeded centers in [0, box)^dim, per-point noise."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, box, size=(clusters, dim))
    assign = rng.integers(0, clusters, size=n)
    return centers[assign] + rng.normal(0.0, spread * box, size=(n, dim))


def generate_sequences(n, seed, min_len=4, max_len=40, alphabet=SEQUENCE_ALPHABET):
    """Random symbol strings with uniform lengths in [min_len, max_len]."""
    rng = np.random.default_rng(seed)
    lengths = rng.integers(min_len, max_len + 1, size=n)
    syms = np.array(list(alphabet))
    return ["".join(syms[rng.integers(0, len(syms), size=l)]) for l in lengths]


# -- dataset statistics ----------------------------------------------------


def estimate_diameter(dataset, samples=2000, seed=0):
    """Sampled estimate of the dataset diameter (max pairwise distance seen)."""
    n = dataset.n
    if n < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    best = 0.0
    probes = min(64, n)
    anchor_rows = rng.integers(0, n, size=probes)
    per = max(1, samples // probes)
    for a in anchor_rows:
        prepared = dataset.prepare_query(dataset.payload(int(a)))
        rows = rng.integers(0, n, size=per)
        d = dataset.one_to_many(prepared, rows)
        if d.size:
            best = max(best, float(d.max()))
    return best


def coordinate_range(dataset):
    """Largest single-coordinate span; vector datasets only."""
    if dataset.metric not in VECTOR_METRICS:
        raise MetricMismatchError("coordinate range is defined for vector datasets only")
    if dataset.n == 0:
        return 0.0
    mat = dataset.store.mat
    return float((mat.max(axis=0) - mat.min(axis=0)).max())


def resolve_radius(dataset, value, mode="absolute", seed=0):
    """Convert a radius setting to an absolute radius.

    Modes: "absolute" passes value through; "relative-diameter" scales a
    x0.01% setting (value 8 -> 0.0008) by a sampled diameter estimate;
    "relative-range" scales by the largest coordinate span.
    """
    if mode == "absolute":
        return float(value)
    scale = float(value) * 1e-4
    if mode == "relative-diameter":
        return scale * estimate_diameter(dataset, seed=seed)
    if mode == "relative-range":
        return scale * coordinate_range(dataset)
    raise ValueError(f"unknown radius mode: {mode!r}")
