import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import toeplitz

from desparse.core import (CoefMatrix, ConstantColumn, DesignMatrix, Disconnected, Geometry,
                           MultiResponse, ToeplitzAR1, geodesic_distance, standardize,
                           toeplitz_quadform, toeplitz_quadform_rows)


def bfs_hops(p, edges, src):
    adj = [[] for _ in range(p)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = [-1] * p
    dist[src] = 0
    queue = [src]
    for u in queue:
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return np.array(dist, dtype=float)


class TestDesignMatrix:
    def test_frozen_copy(self):
        a = np.ones((3, 2))
        X = DesignMatrix(a)
        a[0, 0] = 5
        assert X.data[0, 0] == 1
        with pytest.raises(ValueError):
            X.data[0, 0] = 2

    @pytest.mark.parametrize("bad", [np.ones(3), np.ones((1, 3)), np.full((3, 2), np.nan)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            DesignMatrix(bad)

    def test_standardize_unit_diagonal(self, rng):
        X = standardize(rng.normal(3.0, 2.0, size=(30, 7)))
        np.testing.assert_allclose(np.diag(X.gram()), 1.0, atol=1e-12)
        np.testing.assert_allclose(X.data.mean(axis=0), 0.0, atol=1e-12)
        assert X.standardized

    def test_constant_column(self, rng):
        A = rng.normal(size=(10, 3))
        A[:, 1] = 4.2
        with pytest.raises(ConstantColumn) as err:
            standardize(A)
        assert err.value.j == 1


def test_multiresponse_vector_becomes_column():
    Y = MultiResponse(np.arange(4.0))
    assert (Y.n, Y.T) == (4, 1)


def test_coef_support():
    B = CoefMatrix(np.array([[0, 0], [1, 0], [0, 0], [0, -2.0]]))
    assert B.support.tolist() == [1, 3]
    assert B.s_hat == 2


class TestToeplitz:
    def test_matrix(self):
        M = ToeplitzAR1(2.0, 0.3, 4)
        np.testing.assert_allclose(M.matrix(), 2.0 * toeplitz(0.3 ** np.arange(4)))

    @pytest.mark.parametrize("kw", [dict(sigma2=0, rho=0.1, T=2), dict(sigma2=1, rho=1.0, T=2),
                                    dict(sigma2=1, rho=-0.1, T=2), dict(sigma2=1, rho=0.1, T=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ToeplitzAR1(**kw)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.01, 10), st.floats(0, 0.99), st.integers(1, 12), st.integers(0, 2**31))
    def test_quadform_matches_dense_solve(self, s2, rho, T, seed):
        M = ToeplitzAR1(s2, rho, T)
        a = np.random.default_rng(seed).normal(size=T)
        ref = a @ np.linalg.solve(M.matrix(), a)
        assert toeplitz_quadform(M, a) == pytest.approx(ref, rel=1e-8)

    def test_rows(self, rng):
        M = ToeplitzAR1(1.5, 0.6, 5)
        A = rng.normal(size=(7, 5))
        ref = [a @ np.linalg.solve(M.matrix(), a) for a in A]
        np.testing.assert_allclose(toeplitz_quadform_rows(M, A), ref, rtol=1e-10)


class TestGeometry:
    def test_chain_distances_match_bfs(self):
        edges = [(i, i + 1) for i in range(5)]
        G = Geometry(np.arange(6.0), edges, np.ones(5))
        for s in range(6):
            np.testing.assert_array_equal(G.distances()[s], bfs_hops(6, edges, s))

    def test_random_tree_matches_bfs(self, rng):
        p = 40
        edges = [(int(rng.integers(0, k)), k) for k in range(1, p)]
        G = Geometry(rng.normal(size=(p, 2)), edges, np.ones(p - 1))
        for s in (0, 7, 39):
            np.testing.assert_array_equal(G.distances()[s], bfs_hops(p, edges, s))

    def test_duplicate_edges_keep_shortest(self):
        G = Geometry(np.zeros((2, 1)), [(0, 1), (1, 0)], [3.0, 2.0])
        assert G.edges.shape == (1, 2)
        assert geodesic_distance(G, 0, 1) == 2.0

    def test_disconnected(self):
        with pytest.raises(Disconnected):
            Geometry(np.zeros((3, 1)), [(0, 1)], [1.0])

    @pytest.mark.parametrize("edges,lengths", [([(0, 0)], [1.0]), ([(0, 1)], [0.0]),
                                               ([(0, 5)], [1.0])])
    def test_invalid_edges(self, edges, lengths):
        with pytest.raises(ValueError):
            Geometry(np.zeros((2, 1)), edges, lengths)

    def test_distance_to_set(self):
        G = Geometry(np.arange(4.0), [(0, 1), (1, 2), (2, 3)], [1.0, 2.0, 1.0])
        np.testing.assert_array_equal(G.distance_to_set([0, 3]), [0, 1, 1, 0])
        assert np.all(np.isinf(G.distance_to_set([])))
        assert G.diameter() == 4.0
        with pytest.raises(IndexError):
            geodesic_distance(G, 0, 4)
