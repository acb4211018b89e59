"""Tree addressing arithmetic, key encoding, pivot selection, and builds."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metrictree import metrics
from metrictree.data import Dataset, generate_sequences, generate_uniform
from metrictree.runtime import ParallelRuntime
from metrictree.tree import (
    ConfigError,
    EncodeRangeError,
    OrdinalError,
    TreeConfig,
    build,
    child_node_id,
    decode_distance,
    encode_distance,
    encode_keys,
    level_range,
    node_count_for,
    parent_node_id,
    select_pivot_fft,
    tree_height,
)

from _reference import check_level_history, check_tree_invariants, ref_tree_height

ncs = st.integers(min_value=2, max_value=64)


# -- height and addressing arithmetic --------------------------------------


def test_tree_height_known_values():
    assert tree_height(10, 2) == (3, 2)
    assert tree_height(611756, 20) == (4, 3)
    assert tree_height(1, 2) == (0, 0)
    assert tree_height(2, 2) == (1, 0)
    assert tree_height(3, 2) == (1, 0)
    assert tree_height(4, 2) == (2, 1)


def test_tree_height_exact_powers_no_float_rounding():
    # 20**4 - 1 objects fit height 3 exactly; one more forces height 4.
    assert tree_height(20**4 - 1, 20) == (3, 2)
    assert tree_height(20**4, 20) == (4, 3)


@given(st.integers(min_value=1, max_value=10**9), ncs)
def test_tree_height_matches_reference(n, nc):
    assert tree_height(n, nc) == ref_tree_height(n, nc)


def test_tree_height_validation():
    with pytest.raises(ConfigError):
        tree_height(5, 1)
    with pytest.raises(ValueError):
        tree_height(0, 2)


@given(st.integers(min_value=1, max_value=10**6), ncs)
def test_child_parent_inverse(i, nc):
    for j in (1, nc):
        child = child_node_id(i, j, nc)
        assert parent_node_id(child, nc) == i


@given(st.integers(min_value=2, max_value=10**6), ncs)
def test_parent_then_child_recovers(i, nc):
    parent = parent_node_id(i, nc)
    children = [child_node_id(parent, j, nc) for j in range(1, nc + 1)]
    assert i in children


def test_addressing_validation():
    with pytest.raises(OrdinalError):
        child_node_id(1, 0, 4)
    with pytest.raises(OrdinalError):
        child_node_id(1, 5, 4)
    with pytest.raises(OrdinalError):
        child_node_id(0, 1, 4)
    with pytest.raises(OrdinalError):
        parent_node_id(1, 4)
    with pytest.raises(OrdinalError):
        level_range(0, 4)


@given(st.integers(min_value=1, max_value=8), ncs)
def test_level_ranges_tile_the_id_space(levels, nc):
    expected_first = 1
    for level in range(1, levels + 1):
        first, count = level_range(level, nc)
        assert first == expected_first
        assert count == nc ** (level - 1)
        expected_first = first + count
    assert expected_first - 1 == node_count_for(levels, nc)


# -- key encoding ----------------------------------------------------------


@given(
    st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
    st.integers(min_value=0, max_value=8000),
)
def test_encode_decode_roundtrip(dis, ordinal):
    # Ordinal and level_max cover the widest level the suite ever sorts;
    # the float64 packing keeps 1e-9 precision while
    # (ordinal+1)*(level_max+1) stays well under ~2e6.
    level_max = 100.0
    key = encode_distance(dis, ordinal, level_max)
    assert ordinal <= key < ordinal + 1
    back = decode_distance(key, ordinal, level_max)
    assert abs(back - dis) <= 1e-9 * (1.0 + dis)


def test_encode_key_layout_example():
    key = encode_distance(2.0, 3, 7.0)
    assert key == pytest.approx(2.0 / 8.0 + 3)


def test_encode_validation():
    with pytest.raises(OrdinalError):
        encode_distance(1.0, -1, 10.0)
    with pytest.raises(EncodeRangeError):
        encode_distance(-0.5, 0, 10.0)
    with pytest.raises(EncodeRangeError):
        encode_distance(11.0, 0, 10.0)
    with pytest.raises(EncodeRangeError):
        encode_keys(np.array([0.5, 11.0]), np.array([0, 1]), 10.0)


def test_encode_keys_matches_scalar(rng):
    dis = rng.uniform(0, 9.5, 64)
    ords = rng.integers(0, 12, 64)
    keys = encode_keys(dis, ords, 9.5)
    for t in range(64):
        assert keys[t] == encode_distance(float(dis[t]), int(ords[t]), 9.5)


def test_sorted_keys_group_by_ordinal_then_distance(rng):
    dis = rng.uniform(0, 5.0, 200)
    ords = np.sort(rng.integers(0, 8, 200))
    keys = encode_keys(dis, ords, 5.0)
    perm = np.argsort(keys, kind="stable")
    s_ords = ords[perm]
    s_dis = dis[perm]
    assert np.all(s_ords[:-1] <= s_ords[1:])
    for o in range(8):
        seg = s_dis[s_ords == o]
        assert np.all(seg[:-1] <= seg[1:])


# -- pivot selection -------------------------------------------------------


def test_fft_picks_farthest_from_ancestors():
    ds = Dataset.from_vectors(np.arange(12, dtype=float).reshape(-1, 1), metrics.L2)
    rng = np.random.default_rng(0)
    assert select_pivot_fft(ds, [0, 1, 10], [0], rng) == 10
    # Two ancestors at both ends: the middle maximizes the min distance.
    assert select_pivot_fft(ds, [0, 5, 11], [0, 11], rng) == 5


def test_fft_tie_breaks_by_smallest_id():
    ds = Dataset.from_vectors(
        np.array([[0.0], [4.0], [8.0]]), metrics.L2, ids=np.array([10, 20, 30])
    )
    rng = np.random.default_rng(0)
    # Rows 1 and 2 are equally far from ancestor row... make them tie.
    ds2 = Dataset.from_vectors(np.array([[0.0], [-4.0], [4.0]]), metrics.L2)
    assert select_pivot_fft(ds2, [0, 1, 2], [0], rng) == 1


def test_fft_root_is_seeded_random_member():
    ds = Dataset.from_vectors(np.arange(30, dtype=float).reshape(-1, 1), metrics.L2)
    a = select_pivot_fft(ds, np.arange(30), [], np.random.default_rng(7))
    b = select_pivot_fft(ds, np.arange(30), [], np.random.default_rng(7))
    assert a == b
    assert 0 <= a < 30


def test_fft_empty_segment_rejected():
    ds = Dataset.from_vectors(np.zeros((1, 1)), metrics.L2)
    from metrictree.tree import EmptyNodeError

    with pytest.raises(EmptyNodeError):
        select_pivot_fft(ds, [], [0], np.random.default_rng(0))


# -- configuration ---------------------------------------------------------


def test_config_validation():
    assert TreeConfig().node_capacity == 20
    with pytest.raises(ConfigError):
        TreeConfig(node_capacity=1)


# -- building --------------------------------------------------------------


def line_dataset(n):
    return Dataset.from_vectors(np.arange(n, dtype=float).reshape(-1, 1), metrics.L2)


def test_build_ten_objects_fanout_two_shape():
    tree = build(line_dataset(10), TreeConfig(node_capacity=2, seed=0))
    assert tree.node_count == 7
    assert tree.levels == 3
    assert tree.size[1:].tolist() == [10, 5, 5, 2, 3, 2, 3]
    assert tree.pivot_id[1:].tolist() == [8, 5, 0, 6, 7, 1, 4]
    check_tree_invariants(tree)


def test_build_partition_remainder_to_last_child():
    tree = build(line_dataset(10), TreeConfig(node_capacity=3, seed=0))
    assert tree.size[2:5].tolist() == [3, 3, 4]


def test_build_empty_dataset():
    tree = build(line_dataset(0), TreeConfig(node_capacity=4))
    assert tree.n == 0 and tree.levels == 0 and tree.node_count == 0


def test_build_single_object():
    tree = build(line_dataset(1), TreeConfig(node_capacity=4, seed=0))
    assert tree.levels == 1 and tree.node_count == 1
    assert tree.size[1] == 1 and tree.pivot_id[1] == 0
    assert tree.min_dis[1] == 0.0 and tree.max_dis[1] == 0.0
    check_tree_invariants(tree)


def test_build_same_seed_is_deterministic(rng):
    mat = rng.normal(size=(90, 3))
    ds = Dataset.from_vectors(mat, metrics.L2)
    cfg = TreeConfig(node_capacity=3, seed=5)
    a = build(ds, cfg)
    b = build(ds, cfg)
    np.testing.assert_array_equal(a.rows, b.rows)
    np.testing.assert_array_equal(a.dis, b.dis)
    np.testing.assert_array_equal(a.pivot_id, b.pivot_id)
    c = build(ds, TreeConfig(node_capacity=3, seed=6))
    assert not np.array_equal(a.pivot_id, c.pivot_id)


def test_build_worker_count_never_changes_results(rng):
    mat = rng.normal(size=(200, 2))
    ds = Dataset.from_vectors(mat, metrics.L2)
    cfg = TreeConfig(node_capacity=4, seed=1)
    with ParallelRuntime(workers=1) as rt1, ParallelRuntime(workers=8) as rt8:
        a = build(ds, cfg, rt1)
        b = build(ds, cfg, rt8)
    np.testing.assert_array_equal(a.rows, b.rows)
    np.testing.assert_array_equal(a.dis, b.dis)
    np.testing.assert_array_equal(a.pivot_id, b.pivot_id)


@pytest.mark.parametrize("nc", [2, 5, 20])
@pytest.mark.parametrize("n", [2, 3, 37, 260])
def test_build_invariants_vectors(rng, n, nc):
    ds = Dataset.from_vectors(rng.normal(size=(n, 2)), metrics.L2)
    tree = build(ds, TreeConfig(node_capacity=nc, seed=2))
    check_tree_invariants(tree)


def test_build_invariants_strings():
    ds = Dataset.from_strings(generate_sequences(120, seed=4), metrics.EDIT)
    tree = build(ds, TreeConfig(node_capacity=4, seed=0))
    check_tree_invariants(tree)


def test_build_invariants_duplicate_payloads():
    mat = np.repeat(generate_uniform(12, 2, seed=1), 8, axis=0)
    ds = Dataset.from_vectors(mat, metrics.L2)
    tree = build(ds, TreeConfig(node_capacity=3, seed=0))
    check_tree_invariants(tree)


def test_build_retained_level_history():
    ds = line_dataset(50)
    tree = build(ds, TreeConfig(node_capacity=3, seed=0, store_leaf_only=False))
    check_tree_invariants(tree)
    check_level_history(tree)
    default = build(ds, TreeConfig(node_capacity=3, seed=0))
    assert default.level_history == []


# -- tree views ------------------------------------------------------------


def test_segment_and_ancestors():
    tree = build(line_dataset(10), TreeConfig(node_capacity=2, seed=0))
    seg = tree.segment(2)
    assert seg.size == 5
    assert tree.ancestor_pivot_ids(1) == []
    assert tree.ancestor_pivot_ids(4) == [8, 5]
    assert tree.ancestor_pivot_ids(7) == [8, 0]


def test_entry_pos_of_id():
    tree = build(line_dataset(10), TreeConfig(node_capacity=2, seed=0))
    for obj in range(10):
        pos = tree.entry_pos_of_id(obj)
        assert tree.object_ids[pos] == obj
