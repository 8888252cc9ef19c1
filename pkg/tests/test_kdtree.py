import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nerfsynth.kdtree import KDTree


def brute(data, q, k):
    d = np.sqrt(((data.astype(np.float64) - q) ** 2).sum(1))
    order = np.lexsort((np.arange(len(d)), d))[:k]
    return d[order], order


@pytest.mark.parametrize("k", [1, 10, 20])
def test_matches_linear_scan(k):
    rng = np.random.default_rng(k)
    data = rng.normal(size=(900, 24))
    tree = KDTree(data, leaf_size=16)
    for q in rng.normal(size=(50, 24)):
        d, ids = tree.query(q, k)
        bd, bids = brute(data, q, k)
        assert np.array_equal(ids, bids)
        np.testing.assert_allclose(d, bd, rtol=1e-9, atol=1e-12)


def test_indexed_vector_is_its_own_nearest():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(200, 8))
    tree = KDTree(data)
    d, ids = tree.query(data[37], 1)
    assert ids[0] == 37 and d[0] == 0.0


def test_ties_break_by_id():
    data = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [0.0, 0.0]])
    d, ids = KDTree(data, leaf_size=1).query([0.0, 0.0], 3)
    assert ids.tolist() == [1, 2, 4]
    assert d.tolist() == [0.0, 0.0, 0.0]


def test_k_all_is_sorted_scan_and_k_clamped():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(60, 5))
    q = rng.normal(size=5)
    d, ids = KDTree(data, leaf_size=4).query(q, 1000)
    assert len(ids) == 60
    assert np.array_equal(ids, brute(data, q, 60)[1])
    assert np.all(np.diff(d) >= 0)


def test_bounded_search_returns_k_valid_results():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(500, 6))
    tree = KDTree(data, leaf_size=8, max_leaf_visits=2)
    d, ids = tree.query(rng.normal(size=6), 10)
    assert len(set(ids.tolist())) == 10
    assert np.all(np.diff(d) >= 0)


def test_bad_inputs():
    with pytest.raises(ValueError):
        KDTree(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        KDTree(np.zeros((4, 3))).query(np.zeros(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 120), st.integers(1, 6), st.integers(1, 15), st.integers(0, 10 ** 6))
def test_exact_on_random_sets(n, dim, k, seed):
    rng = np.random.default_rng(seed)
    data = rng.integers(-3, 4, size=(n, dim)).astype(np.float64)  # many ties
    q = rng.integers(-3, 4, size=dim).astype(np.float64)
    d, ids = KDTree(data, leaf_size=3).query(q, k)
    bd, bids = brute(data, q, min(k, n))
    assert np.array_equal(ids, bids)
