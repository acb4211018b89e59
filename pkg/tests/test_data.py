"""Dataset containers, file formats, generators, and radius resolution."""

import numpy as np
import pytest

from metrictree import metrics
from metrictree.data import (
    DataObject,
    Dataset,
    DatasetFormatError,
    coordinate_range,
    default_metric_for,
    estimate_diameter,
    generate_clustered,
    generate_sequences,
    generate_uniform,
    load_dataset,
    resolve_radius,
    save_dataset,
)

from _reference import ref_distance


# -- containers ------------------------------------------------------------


def test_from_vectors_basics(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    assert ds.n == 64 and ds.dim == 3
    assert ds.ids.tolist() == list(range(64))
    np.testing.assert_array_equal(ds.payload(5), small_vectors[5])


def test_from_strings_basics(small_strings):
    ds = Dataset.from_strings(small_strings, metrics.EDIT)
    assert ds.n == len(small_strings)
    assert ds.payload(0) == small_strings[0]
    assert ds.dim is None


def test_custom_ids_must_increase(small_vectors):
    ids = np.arange(0, 640, 10)
    ds = Dataset.from_vectors(small_vectors, metrics.L2, ids=ids)
    assert ds.ids.tolist() == ids.tolist()
    with pytest.raises(ValueError):
        Dataset.from_vectors(small_vectors, metrics.L2, ids=ids[::-1])


def test_rows_of_ids_roundtrip(small_vectors):
    ids = np.arange(100, 164)
    ds = Dataset.from_vectors(small_vectors, metrics.L2, ids=ids)
    rows = ds.rows_of_ids([100, 163, 130])
    assert rows.tolist() == [0, 63, 30]
    with pytest.raises(KeyError):
        ds.rows_of_ids([99])
    with pytest.raises(KeyError):
        ds.rows_of_ids([164])


def test_from_objects_sorts_by_id():
    objs = [DataObject(7, "bb"), DataObject(3, "aa"), DataObject(11, "cc")]
    ds = Dataset.from_objects(objs, metrics.EDIT)
    assert ds.ids.tolist() == [3, 7, 11]
    assert [ds.payload(r) for r in range(3)] == ["aa", "bb", "cc"]


def test_metric_payload_kind_mismatch(small_vectors, small_strings):
    with pytest.raises(metrics.MetricMismatchError):
        Dataset.from_vectors(small_vectors, metrics.EDIT)
    with pytest.raises(metrics.MetricMismatchError):
        Dataset.from_strings(small_strings, metrics.L2)


def test_one_to_many_matches_reference(rng, small_vectors, small_strings):
    for metric, payloads in (
        (metrics.L1, list(small_vectors)),
        (metrics.L2, list(small_vectors)),
        (metrics.ANGULAR, list(small_vectors)),
        (metrics.EDIT, small_strings),
    ):
        ds = (
            Dataset.from_vectors(np.asarray(payloads), metric)
            if metric != metrics.EDIT
            else Dataset.from_strings(payloads, metric)
        )
        q = payloads[7]
        prepared = ds.prepare_query(q)
        rows = rng.integers(0, ds.n, 32).astype(np.int64)
        got = ds.one_to_many(prepared, rows)
        want = [ref_distance(metric, q, payloads[int(r)]) for r in rows]
        np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)
        assert ds.one_to_many(prepared, np.empty(0, np.int64)).size == 0


def test_row_to_row_matches_pairwise(rng, small_vectors, small_strings):
    for ds in (
        Dataset.from_vectors(small_vectors, metrics.L2),
        Dataset.from_vectors(small_vectors, metrics.ANGULAR),
        Dataset.from_strings(small_strings, metrics.EDIT),
    ):
        a = rng.integers(0, ds.n, 40).astype(np.int64)
        b = rng.integers(0, ds.n, 40).astype(np.int64)
        got = ds.row_to_row(a, b)
        want = [ds.pairwise(int(i), int(j)) for i, j in zip(a, b)]
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_prepare_query_dimension_check(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    with pytest.raises(metrics.MetricMismatchError):
        ds.prepare_query([1.0, 2.0])


def test_subset_rows(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    sub = ds.subset_rows(np.array([5, 9, 20]))
    assert sub.n == 3
    np.testing.assert_array_equal(sub.payload(1), small_vectors[9])


# -- file formats ----------------------------------------------------------


def test_vectors_roundtrip(tmp_path, small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    path = tmp_path / "points.txt"
    save_dataset(ds, path, "vectors")
    back = load_dataset(path, "vectors")
    assert back.metric == metrics.L2
    np.testing.assert_array_equal(back.store.mat, ds.store.mat)


def test_words_roundtrip(tmp_path):
    words = ["alpha", "beta", "gamma"]
    ds = Dataset.from_strings(words, metrics.EDIT)
    path = tmp_path / "w.txt"
    save_dataset(ds, path, "words")
    back = load_dataset(path, "words")
    assert back.store.strings == words
    assert back.metric == metrics.EDIT


def test_sequences_alphabet_enforced(tmp_path):
    path = tmp_path / "seq.txt"
    path.write_text("ACGT\nACGX\n")
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(path, "sequences")
    assert exc.value.line == 2


def test_words_single_token_enforced(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("good\ntwo words\n")
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(path, "words")
    assert exc.value.line == 2


def test_vectors_bad_number_has_lineno(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("# dim=2 n=2\n1.0 2.0\n1.0 oops\n")
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(path, "vectors")
    assert exc.value.line == 3


def test_vectors_header_mismatches(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("# dim=2 n=3\n1.0 2.0\n3.0 4.0\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(path, "vectors")
    path.write_text("# dim=3 n=2\n1.0 2.0\n3.0 4.0\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(path, "vectors")


def test_vectors_ragged_rows_rejected(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("1.0 2.0\n3.0 4.0 5.0\n")
    with pytest.raises(DatasetFormatError) as exc:
        load_dataset(path, "vectors")
    assert exc.value.line == 2


def test_locations_fixed_dim(tmp_path):
    path = tmp_path / "loc.txt"
    path.write_text("1.0 2.0\n3.0 4.0\n")
    ds = load_dataset(path, "locations")
    assert ds.dim == 2 and ds.metric == metrics.L2
    path.write_text("1.0 2.0 3.0\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(path, "locations")


def test_unknown_format_rejected(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("1\n")
    with pytest.raises(DatasetFormatError):
        load_dataset(path, "parquet")


def test_blank_lines_and_comments_skipped(tmp_path):
    path = tmp_path / "w.txt"
    path.write_text("alpha\n\nbeta\n")
    ds = load_dataset(path, "words")
    assert ds.store.strings == ["alpha", "beta"]


def test_default_metrics():
    assert default_metric_for("words") == metrics.EDIT
    assert default_metric_for("sequences") == metrics.EDIT
    assert default_metric_for("vectors") == metrics.L2
    assert default_metric_for("locations") == metrics.L2


# -- generators ------------------------------------------------------------


def test_generate_uniform_deterministic():
    a = generate_uniform(50, 3, seed=9)
    b = generate_uniform(50, 3, seed=9)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (50, 3)
    assert a.min() >= 0.0 and a.max() < 1.0
    c = generate_uniform(50, 3, seed=10)
    assert not np.array_equal(a, c)


def test_generate_clustered_concentration():
    mat = generate_clustered(400, 2, clusters=4, seed=1, spread=0.001)
    assert mat.shape == (400, 2)
    # Replay the seeded generator to recover the centers, then check the
    # points hug them: clusters are tight at this spread.
    rng = np.random.default_rng(1)
    centers = rng.uniform(0.0, 1.0, size=(4, 2))
    d = np.linalg.norm(mat[:, None, :] - centers[None, :, :], axis=2).min(axis=1)
    assert np.quantile(d, 0.99) < 0.01


def test_generate_sequences_alphabet():
    seqs = generate_sequences(30, seed=3, min_len=4, max_len=9)
    assert len(seqs) == 30
    assert all(4 <= len(s) <= 9 for s in seqs)
    assert all(set(s) <= set("ACGTN") for s in seqs)
    assert seqs == generate_sequences(30, seed=3, min_len=4, max_len=9)


# -- statistics and radius resolution --------------------------------------


def test_estimate_diameter_bounds(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    est = estimate_diameter(ds)
    true = max(
        ds.pairwise(i, j) for i in range(ds.n) for j in range(i + 1, ds.n)
    )
    assert 0.0 < est <= true + 1e-12


def test_coordinate_range(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    want = (small_vectors.max(axis=0) - small_vectors.min(axis=0)).max()
    assert coordinate_range(ds) == pytest.approx(want)
    sds = Dataset.from_strings(["ab"], metrics.EDIT)
    with pytest.raises(metrics.MetricMismatchError):
        coordinate_range(sds)


def test_resolve_radius_modes(small_vectors):
    ds = Dataset.from_vectors(small_vectors, metrics.L2)
    assert resolve_radius(ds, 0.25) == 0.25
    rd = resolve_radius(ds, 8, mode="relative-diameter")
    assert rd == pytest.approx(8e-4 * estimate_diameter(ds))
    rr = resolve_radius(ds, 8, mode="relative-range")
    assert rr == pytest.approx(8e-4 * coordinate_range(ds))
    with pytest.raises(ValueError):
        resolve_radius(ds, 1, mode="percentile")
