import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pixelsne.ingest import make_gaussian_mixture
from pixelsne.neighbors import (
    NeighborGraph,
    VantagePointTree,
    exact_knn,
    knn_graph,
    recall,
    rp_knn,
    vp_knn,
)


def brute_force(x, k):
    """Independent oracle: full distance matrix, lexicographic (distance, index) order."""
    n = x.shape[0]
    ids = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    for i in range(n):
        d = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
        d[i] = np.inf
        order = np.lexsort((np.arange(n), d))[:k]
        ids[i] = order
        dists[i] = d[order]
    return ids, dists


@st.composite
def point_sets(draw, max_n=60, max_d=6, grid=False):
    n = draw(st.integers(5, max_n))
    d = draw(st.integers(1, max_d))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    # integer grids produce many exact distance ties
    x = rng.integers(0, 4, size=(n, d)).astype(float) if grid else rng.normal(size=(n, d))
    k = draw(st.integers(1, n - 1))
    return x, k


@given(point_sets())
def test_exact_knn_matches_brute_force(case):
    x, k = case
    g = exact_knn(x, k)
    ids, dists = brute_force(x, k)
    np.testing.assert_array_equal(g.ids, ids)
    np.testing.assert_allclose(g.dists, dists, rtol=0, atol=1e-12)


@given(point_sets(grid=True))
def test_exact_knn_ties_go_to_lower_index(case):
    x, k = case
    ids, _ = brute_force(x, k)
    np.testing.assert_array_equal(exact_knn(x, k).ids, ids)


@given(point_sets(grid=True))
def test_vp_tree_is_exact(case):
    x, k = case
    ids, dists = brute_force(x, k)
    g = vp_knn(x, k, seed=3)
    np.testing.assert_array_equal(g.ids, ids)
    np.testing.assert_allclose(g.dists, dists, rtol=0, atol=1e-12)


def test_three_point_example():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    g = exact_knn(x, 1)
    assert g.ids[:, 0].tolist() == [1, 0, 1]
    np.testing.assert_allclose(g.dists[:, 0], [1.0, 1.0, 2.0])
    assert vp_knn(x, 1).ids[:, 0].tolist() == [1, 0, 1]


def test_exact_knn_blocked_large(rng):
    x, _ = make_gaussian_mixture(5, 1500, 20, seed=1)
    ids, _ = brute_force(x, 10)
    np.testing.assert_array_equal(exact_knn(x, 10, block_size=128).ids, ids)


def test_duplicate_points():
    x = np.zeros((6, 3))
    g = exact_knn(x, 2)
    assert g.ids[0].tolist() == [1, 2]
    assert g.ids[5].tolist() == [0, 1]
    np.testing.assert_array_equal(g.dists, 0.0)
    np.testing.assert_array_equal(vp_knn(x, 2).ids, g.ids)


def test_vp_tree_object(rng):
    x = rng.normal(size=(80, 4))
    tree = VantagePointTree(x, seed=9)
    np.testing.assert_array_equal(tree.query_self(5).ids, brute_force(x, 5)[0])


@pytest.mark.parametrize("backend", ["exact", "vp", "rp"])
def test_k_validation(backend):
    x = np.zeros((5, 2))
    with pytest.raises(ValueError):
        knn_graph(x, 5, backend=backend)
    with pytest.raises(ValueError):
        knn_graph(x, 0, backend=backend)


def test_unknown_backend():
    with pytest.raises(ValueError):
        knn_graph(np.zeros((5, 2)), 2, backend="annoy")


def test_rp_lists_are_valid(rng):
    x = rng.normal(size=(300, 8))
    g = rp_knn(x, 10, num_trees=2, refine_iters=1, seed=0)
    assert g.ids.shape == (300, 10)
    for i in range(300):
        assert i not in g.ids[i]
        assert len(set(g.ids[i])) == 10
        d = np.sqrt(((x[g.ids[i]] - x[i]) ** 2).sum(axis=1))
        np.testing.assert_allclose(g.dists[i], d, atol=1e-12)
        assert np.all(np.diff(g.dists[i]) >= 0)


def test_rp_is_deterministic(rng):
    x = rng.normal(size=(200, 5))
    a = rp_knn(x, 8, seed=4)
    b = rp_knn(x, 8, seed=4)
    np.testing.assert_array_equal(a.ids, b.ids)


def test_rp_recall_improves_with_refinement():
    x, _ = make_gaussian_mixture(10, 1000, 30, seed=2)
    exact = exact_knn(x, 20)
    values = [recall(rp_knn(x, 20, num_trees=3, refine_iters=t, seed=1), exact)
              for t in range(4)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] > 0.95


def test_rp_single_tree_small_leaves(rng):
    # leaves smaller than k force the random fill path
    x = rng.normal(size=(100, 3))
    g = rp_knn(x, 10, num_trees=1, refine_iters=0, leaf_max=3, seed=0)
    assert all(len(set(row)) == 10 for row in g.ids)


def test_recall_and_tsv(tmp_path):
    g = NeighborGraph(np.array([[1, 2], [0, 2], [0, 1]]), np.ones((3, 2)))
    h = NeighborGraph(np.array([[1, 2], [2, 0], [1, 0]]), np.ones((3, 2)))
    assert recall(g, h) == 1.0
    assert recall(NeighborGraph(np.array([[1, 0], [0, 2], [0, 1]]), np.ones((3, 2))), g) == 5 / 6
    g.to_tsv(tmp_path / "g.tsv")
    lines = (tmp_path / "g.tsv").read_text().splitlines()
    assert lines[0] == "item_id\tneighbor_id\tdistance"
    assert len(lines) == 7
