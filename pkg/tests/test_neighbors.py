import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simgof.errors import SizeError, SpecError
from simgof.neighbors import NeighborIndex, build_index, k_dist, knn_query

from .oracles import brute_neighbors


def test_single_point_index():
    index = build_index(np.array([[1.0, 2.0]]))
    assert index.n == 1
    ids, dists = index.query([1.0, 2.0], k=1)
    assert ids[0] == 0 and dists[0] == 0.0


def test_query_matches_exhaustive_scan_2d():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(1000, 2))
    index = build_index(pts)
    for _ in range(25):
        y = rng.normal(size=2)
        ids, dists = index.query(y, k=7)
        oid, od = brute_neighbors(pts, y, 7)
        np.testing.assert_array_equal(ids, oid)
        np.testing.assert_allclose(dists, od, rtol=1e-13, atol=0)


def test_query_matches_exhaustive_scan_10d_k20():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(500, 10))
    index = build_index(pts)
    y = rng.normal(size=10)
    ids, dists = index.query(y, k=20)
    oid, od = brute_neighbors(pts, y, 20)
    np.testing.assert_array_equal(ids, oid)
    np.testing.assert_allclose(dists, od, rtol=1e-13, atol=0)


@pytest.mark.parametrize("dim,n", [(1, 200), (2, 500), (3, 800), (7, 300),
                                   (20, 400), (50, 200), (130, 150)])
def test_backends_match_oracle_across_dims(dim, n):
    rng = np.random.default_rng(dim * 7 + n)
    pts = rng.normal(size=(n, dim))
    queries = rng.normal(size=(10, dim))
    for backend in ("kdtree", "brute"):
        index = build_index(pts, backend=backend)
        ids, dists = index.query_batch(queries, k=min(15, n))
        for r, y in enumerate(queries):
            oid, od = brute_neighbors(pts, y, min(15, n))
            np.testing.assert_array_equal(ids[r], oid)
            np.testing.assert_allclose(dists[r], od, rtol=1e-12, atol=1e-14)


def test_large_set_exactness():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5000, 4))
    index = build_index(pts)
    y = rng.normal(size=4)
    ids, _ = index.query(y, k=50)
    oid, _ = brute_neighbors(pts, y, 50)
    np.testing.assert_array_equal(ids, oid)


@settings(max_examples=80, deadline=None)
@given(
    data=st.lists(
        st.lists(st.integers(min_value=-8, max_value=8), min_size=2, max_size=2),
        min_size=1,
        max_size=40,
    ),
    qy=st.lists(st.integers(min_value=-8, max_value=8), min_size=2, max_size=2),
    k=st.integers(min_value=1, max_value=12),
)
def test_ties_break_by_ascending_id(data, qy, k):
    # integer grids force exact distance ties: both backends must produce the
    # oracle's (distance, id) ordering
    pts = np.array(data, dtype=float)
    y = np.array(qy, dtype=float)
    k = min(k, len(pts))
    oid, od = brute_neighbors(pts, y, k)
    for backend in ("kdtree", "brute"):
        ids, dists = build_index(pts, backend=backend).query(y, k=k)
        np.testing.assert_array_equal(ids, oid)
        np.testing.assert_array_equal(dists, od)


def test_duplicates_both_retrievable():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
    index = build_index(pts)
    ids, dists = index.query([0.0, 0.0], k=2)
    np.testing.assert_array_equal(ids, [0, 1])
    np.testing.assert_array_equal(dists, [0.0, 0.0])


def test_exclusion_skips_exactly_one_id():
    pts = np.array([[0.0], [1.0], [3.0]])
    index = build_index(pts)
    pairs = knn_query(index, [0.0], k=2, exclude=0)
    assert pairs == [(1, 1.0), (2, 3.0)]


def test_coincident_query_without_exclusion():
    pts = np.array([[0.0], [1.0], [3.0]])
    index = build_index(pts)
    pairs = knn_query(index, [0.0], k=1)
    assert pairs == [(0, 0.0)]


def test_k_larger_than_available_returns_all():
    pts = np.array([[0.0], [1.0]])
    index = build_index(pts)
    pairs = knn_query(index, [0.5], k=10)
    assert len(pairs) == 2


def test_empty_effective_set_is_an_error():
    index = build_index(np.array([[0.0]]))
    with pytest.raises(SizeError):
        index.query([0.0], k=1, exclude=0)


def test_kdist_self_exclusion():
    pts = np.array([[0.0], [1.0], [3.0]])
    index = build_index(pts)
    assert k_dist(index, [0.0], k=2) == 3.0


def test_kdist_equilateral_triangle():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    index = build_index(pts)
    for v in pts:
        assert k_dist(index, v, k=2) == pytest.approx(1.0, abs=1e-12)


def test_kdist_random_matches_oracle():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(60, 3))
    index = build_index(pts)
    y = rng.normal(size=3)
    d = np.sort(np.sqrt(((pts - y) ** 2).sum(axis=1)))
    assert k_dist(index, y, k=4) == pytest.approx(d[3], rel=1e-13)


def test_kdist_too_few_points_errors():
    index = build_index(np.array([[0.0], [1.0]]))
    with pytest.raises(SizeError):
        k_dist(index, [0.0], k=2)  # self-excluded leaves one point


def test_permutation_invariance():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(40, 3))
    perm = rng.permutation(40)
    index_a = build_index(pts)
    index_b = build_index(pts[perm])
    y = rng.normal(size=3)
    ids_a, d_a = index_a.query(y, k=5)
    ids_b, d_b = index_b.query(y, k=5)
    np.testing.assert_allclose(d_a, d_b, rtol=1e-13)
    np.testing.assert_array_equal(perm[ids_b], ids_a)


def test_dimension_mismatch_is_build_or_query_error():
    with pytest.raises(SpecError):
        build_index(np.zeros((2, 2, 2)))
    index = build_index(np.zeros((3, 2)))
    with pytest.raises(SpecError):
        index.query([0.0, 0.0, 0.0], k=1)


def test_high_dim_defaults_to_brute():
    pts = np.random.default_rng(7).normal(size=(10, 40))
    assert build_index(pts).backend == "brute"
    assert build_index(pts[:, :5]).backend == "kdtree"
