"""Distance metrics over strings and vectors.

Four metric kinds are supported: unit-cost edit distance on strings, the L1 and
L2 norms on real vectors, and angular distance (arccos of cosine similarity) on
real vectors.  All kernels return float64 and are deterministic: the same
payloads always produce bit-identical distances regardless of batch shape or
worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit

EDIT = "edit"
L1 = "l1"
L2 = "l2"
ANGULAR = "angular"

METRIC_KINDS = (EDIT, L1, L2, ANGULAR)
VECTOR_METRICS = (L1, L2, ANGULAR)
STRING_METRICS = (EDIT,)


class MetricMismatchError(TypeError):
    """Payload is incompatible with the requested metric."""


def _require_kind(metric):
    if metric not in METRIC_KINDS:
        raise MetricMismatchError(f"unknown metric kind: {metric!r}")


def encode_string(s):
    """Encode a str as an int32 array of Unicode code points."""
    if not isinstance(s, str):
        raise MetricMismatchError(f"expected str payload, got {type(s).__name__}")
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.int32)


def as_vector(v):
    """Coerce a vector payload to a 1-D float64 array of finite values."""
    try:
        arr = np.asarray(v, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MetricMismatchError(f"payload is not numeric: {exc}") from exc
    if arr.ndim != 1:
        raise MetricMismatchError(f"expected 1-D vector payload, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise MetricMismatchError("vector payload contains non-finite values")
    return arr


@njit(cache=True)
def _edit_pair(a, b):
    """Unit-cost insert/delete/replace DP over two code arrays."""
    la = a.size
    lb = b.size
    if la == 0:
        return lb
    if lb == 0:
        return la
    # Keep the DP row over the shorter string.
    if lb > la:
        a, b = b, a
        la, lb = lb, la
    row = np.empty(lb + 1, dtype=np.int64)
    for j in range(lb + 1):
        row[j] = j
    for i in range(1, la + 1):
        prev_diag = row[0]
        row[0] = i
        ca = a[i - 1]
        for j in range(1, lb + 1):
            tmp = row[j]
            cost = 0 if ca == b[j - 1] else 1
            best = prev_diag + cost
            if row[j] + 1 < best:
                best = row[j] + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            prev_diag = tmp
    return row[lb]


@njit(cache=True)
def _edit_one_to_many(q, codes, offsets, rows, out):
    for t in range(rows.size):
        r = rows[t]
        out[t] = _edit_pair(q, codes[offsets[r] : offsets[r + 1]])


@njit(cache=True)
def _edit_row_pairs(codes, offsets, rows_a, rows_b, out):
    for t in range(rows_a.size):
        a = codes[offsets[rows_a[t]] : offsets[rows_a[t] + 1]]
        b = codes[offsets[rows_b[t]] : offsets[rows_b[t] + 1]]
        out[t] = _edit_pair(a, b)


def edit_distance(a, b):
    """Unit-cost edit distance between two strings."""
    return float(_edit_pair(encode_string(a), encode_string(b)))


def edit_row_pairs(codes, offsets, rows_a, rows_b):
    """Edit distances between aligned row pairs of one packed store."""
    out = np.empty(rows_a.size, dtype=np.float64)
    _edit_row_pairs(
        codes,
        offsets,
        np.ascontiguousarray(rows_a, dtype=np.int64),
        np.ascontiguousarray(rows_b, dtype=np.int64),
        out,
    )
    return out


def edit_one_to_many(q_codes, codes, offsets, rows):
    """Edit distances from one encoded query to the selected stored strings."""
    out = np.empty(rows.size, dtype=np.float64)
    _edit_one_to_many(q_codes, codes, offsets, np.ascontiguousarray(rows, dtype=np.int64), out)
    return out


def l1_one_to_many(q, mat):
    return np.abs(mat - q).sum(axis=1)


def l2_one_to_many(q, mat):
    diff = mat - q
    return np.sqrt((diff * diff).sum(axis=1))


def angular_one_to_many(q, mat, row_norms=None):
    """Angular distances from q to the rows of mat.

    Zero vectors sit at distance pi from every non-zero vector and 0 from other
    zero vectors.  Rows exactly equal to q are forced to distance 0 so the
    identity axiom holds despite arccos rounding.
    """
    if row_norms is None:
        row_norms = np.sqrt((mat * mat).sum(axis=1))
    qn = float(np.sqrt(np.dot(q, q)))
    out = np.empty(mat.shape[0], dtype=np.float64)
    zero_rows = row_norms == 0.0
    if qn == 0.0:
        out[:] = np.pi
        out[zero_rows] = 0.0
        return out
    out[zero_rows] = np.pi
    nz = ~zero_rows
    if np.any(nz):
        dots = (mat[nz] * q).sum(axis=1)
        cos = np.clip(dots / (row_norms[nz] * qn), -1.0, 1.0)
        out[nz] = np.arccos(cos)
    near = out < 1e-6
    if np.any(near):
        eq = (mat[near] == q).all(axis=1)
        idx = np.flatnonzero(near)[eq]
        out[idx] = 0.0
    return out


def l1_row_pairs(a_mat, b_mat):
    return np.abs(a_mat - b_mat).sum(axis=1)


def l2_row_pairs(a_mat, b_mat):
    diff = a_mat - b_mat
    return np.sqrt((diff * diff).sum(axis=1))


def angular_row_pairs(a_mat, b_mat, a_norms, b_norms):
    """Angular distances between aligned row pairs, same edge rules as
    angular_one_to_many."""
    out = np.empty(a_mat.shape[0], dtype=np.float64)
    zero_a = a_norms == 0.0
    zero_b = b_norms == 0.0
    out[zero_a & zero_b] = 0.0
    out[zero_a ^ zero_b] = np.pi
    nz = ~(zero_a | zero_b)
    if np.any(nz):
        dots = (a_mat[nz] * b_mat[nz]).sum(axis=1)
        cos = np.clip(dots / (a_norms[nz] * b_norms[nz]), -1.0, 1.0)
        out[nz] = np.arccos(cos)
    near = nz & (out < 1e-6)
    if np.any(near):
        eq = (a_mat[near] == b_mat[near]).all(axis=1)
        idx = np.flatnonzero(near)[eq]
        out[idx] = 0.0
    return out


def distance(metric, a, b):
    """Distance between two raw payloads under the given metric.

    Args:
        metric: one of METRIC_KINDS.
        a, b: payloads (str for edit, array-like vectors otherwise).

    Returns:
        float distance, always >= 0.

    Raises:
        MetricMismatchError: payloads incompatible with the metric.
    """
    _require_kind(metric)
    if metric == EDIT:
        return edit_distance(a, b)
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape != vb.shape:
        raise MetricMismatchError(
            f"vector dimensionality mismatch: {va.shape[0]} vs {vb.shape[0]}"
        )
    if metric == L1:
        return float(np.abs(va - vb).sum())
    if metric == L2:
        diff = va - vb
        return float(np.sqrt((diff * diff).sum()))
    return float(angular_one_to_many(va, vb[None, :])[0])
