import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsign.graph import (
    Graph,
    GraphError,
    build_laplacian,
    knn_geographic_graph,
    load_coords,
    load_edge_list,
    random_sensor_graph,
    save_coords,
    save_edge_list,
)


def union_find_components(n, edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j, _ in edges:
        parent[find(i)] = find(j)
    return len({find(i) for i in range(n)})


def brute_force_knn_edges(coords, k):
    n = len(coords)
    edges = set()
    for i in range(n):
        d = [(np.hypot(*(coords[i] - coords[j])), j) for j in range(n) if j != i]
        d.sort()
        for _, j in d[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def assert_laplacian_invariants(L):
    assert np.allclose(L, L.T, rtol=0, atol=1e-12)
    assert np.max(np.abs(L.sum(axis=1))) <= 1e-10
    assert np.linalg.eigvalsh(L)[0] >= -1e-9


class TestLaplacian:
    def test_path3(self):
        g = Graph.from_edges(3, [(0, 1, 1), (1, 2, 1)])
        np.testing.assert_array_equal(build_laplacian(g), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])

    def test_single_node(self):
        np.testing.assert_array_equal(build_laplacian(Graph(np.zeros((1, 1)))), [[0.0]])

    def test_weighted_triangle(self):
        g = Graph.from_edges(3, [(0, 1, 0.5), (1, 2, 0.5), (0, 2, 0.5)])
        L = build_laplacian(g)
        np.testing.assert_allclose(np.diag(L), 1.0)
        off = L[~np.eye(3, dtype=bool)]
        np.testing.assert_allclose(off, -0.5)

    def test_zero_nodes_rejected(self):
        with pytest.raises(GraphError):
            Graph.from_edges(0, [])

    def test_zero_eigenvalues_count_components(self):
        # two disjoint triangles plus an isolated node: 3 components
        edges = [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 2), (4, 5, 2), (3, 5, 2)]
        g = Graph.from_edges(7, edges)
        w = np.linalg.eigvalsh(build_laplacian(g))
        assert np.sum(np.abs(w) < 1e-9) == 3 == g.n_components()

    def test_read_only(self):
        L = build_laplacian(random_sensor_graph(10, 0))
        with pytest.raises(ValueError):
            L[0, 0] = 1.0


class TestGraphValidation:
    @pytest.mark.parametrize(
        "A",
        [
            [[0, 1], [2, 0]],
            [[1, 0], [0, 0]],
            [[0, -1], [-1, 0]],
            [[0, np.nan], [np.nan, 0]],
            [[0, 1, 0], [1, 0, 0]],
        ],
    )
    def test_bad_adjacency(self, A):
        with pytest.raises(GraphError):
            Graph(np.array(A, dtype=float))

    def test_from_edges_both_directions(self):
        g = Graph.from_edges(3, [(0, 1, 2.0), (1, 0, 2.0)])
        assert g.edges() == [(0, 1, 2.0)]

    def test_from_edges_conflict(self):
        with pytest.raises(GraphError, match="conflicting"):
            Graph.from_edges(3, [(0, 1, 2.0), (1, 0, 3.0)])

    def test_self_loop(self):
        with pytest.raises(GraphError, match="self-loop"):
            Graph.from_edges(3, [(1, 1, 1.0)])

    def test_out_of_range(self):
        with pytest.raises(GraphError, match="out of range"):
            Graph.from_edges(3, [(0, 3, 1.0)])


class TestKnn:
    def test_two_nodes(self):
        g = knn_geographic_graph([[0, 0], [1, 0]], 1)
        assert g.edges() == [(0, 1, 1.0)]

    def test_collinear(self):
        g = knn_geographic_graph([[0, 0], [1, 0], [2, 0]], 1)
        assert [(i, j) for i, j, _ in g.edges()] == [(0, 1), (1, 2)]
        np.testing.assert_array_equal(g.degrees, [1, 2, 1])

    def test_matches_brute_force(self):
        coords = np.random.default_rng(3).random((10, 2))
        g = knn_geographic_graph(coords, 3)
        assert {(i, j) for i, j, _ in g.edges()} == brute_force_knn_edges(coords, 3)

    def test_tie_breaks_to_lower_index(self):
        # node 0 is equidistant from nodes 1 and 2; node 2 prefers node 3
        g = knn_geographic_graph([[0, 0], [1, 0], [-1, 0], [-1.5, 0]], 1)
        assert g.edges() == [(0, 1, 1.0), (2, 3, 1.0)]

    @pytest.mark.parametrize("k", [0, 3])
    def test_bad_k(self, k):
        with pytest.raises(GraphError):
            knn_geographic_graph([[0, 0], [1, 0], [2, 0]], k)

    def test_nonfinite_coords(self):
        with pytest.raises(GraphError):
            knn_geographic_graph([[0, 0], [np.inf, 0]], 1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(5, 20), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_permutation_equivariant(self, n, k, seed):
        rng = np.random.default_rng(seed)
        coords = rng.random((n, 2))
        perm = rng.permutation(n)
        A = knn_geographic_graph(coords, k).adjacency
        Ap = knn_geographic_graph(coords[perm], k).adjacency
        np.testing.assert_array_equal(Ap, A[np.ix_(perm, perm)])


class TestSensorGraph:
    def test_two_nodes(self):
        g = random_sensor_graph(2, 0)
        (i, j, w), = g.edges()
        assert (i, j) == (0, 1) and 0 < w <= 1

    def test_deterministic(self):
        assert random_sensor_graph(30, 5).edges() == random_sensor_graph(30, 5).edges()

    @pytest.mark.parametrize("seed", range(10))
    def test_connected_n50(self, seed):
        g = random_sensor_graph(50, seed)
        assert union_find_components(50, g.edges()) == 1
        assert_laplacian_invariants(build_laplacian(g))

    def test_six_neighbors(self):
        g = random_sensor_graph(50, 1)
        # every node keeps at least its own 6 choices after symmetrization
        assert np.all((g.adjacency > 0).sum(axis=1) >= 6)

    def test_weights_gaussian_kernel(self):
        g = random_sensor_graph(20, 2)
        c = g.coords
        d = np.hypot(*(c[:, None, :] - c[None, :, :]).transpose(2, 0, 1))
        knn = np.sort(d + np.diag(np.full(20, np.inf)), axis=1)[:, :6]
        sigma = knn.mean()
        for i, j, w in g.edges():
            assert w == pytest.approx(np.exp(-d[i, j] ** 2 / (2 * sigma**2)), rel=1e-12)

    def test_too_small(self):
        with pytest.raises(GraphError):
            random_sensor_graph(1, 0)


class TestFiles:
    def test_edge_list_round_trip(self, tmp_path):
        g = random_sensor_graph(12, 4)
        save_edge_list(g, tmp_path / "g.txt")
        h = load_edge_list(tmp_path / "g.txt", n_nodes=12)
        np.testing.assert_array_equal(h.adjacency, g.adjacency)

    def test_edge_list_defaults_and_comments(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("# header\n0 1\n1 2 0.25  # trailing\n\n")
        g = load_edge_list(p)
        assert g.edges() == [(0, 1, 1.0), (1, 2, 0.25)]

    def test_edge_list_bad_line(self, tmp_path):
        p = tmp_path / "e.txt"
        p.write_text("0 1\n0 1 2 3\n")
        with pytest.raises(GraphError, match=":2:"):
            load_edge_list(p)

    def test_coords_round_trip(self, tmp_path):
        c = np.random.default_rng(0).random((5, 2))
        save_coords(c, tmp_path / "c.csv")
        np.testing.assert_array_equal(load_coords(tmp_path / "c.csv"), c)
        save_coords(c, tmp_path / "g.csv", names=("lat", "lon"))
        np.testing.assert_array_equal(load_coords(tmp_path / "g.csv"), c)

    def test_coords_bad_header(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("id,a,b\n0,1,2\n")
        with pytest.raises(GraphError, match="header"):
            load_coords(p)

    def test_coords_missing_node(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("node,x,y\n0,1,2\n2,3,4\n")
        with pytest.raises(GraphError, match="0..1"):
            load_coords(p)


def test_brute_force_oracle_on_all_small_k():
    coords = np.random.default_rng(11).random((8, 2))
    for k in range(1, 8):
        g = knn_geographic_graph(coords, k)
        assert {(i, j) for i, j, _ in g.edges()} == brute_force_knn_edges(coords, k)
    # complete graph at k = n - 1
    assert len(g.edges()) == len(list(itertools.combinations(range(8), 2)))
