import numpy as np
import pytest

from desparse.cluster import (Clustering, InvalidC, cd_mtlasso, compress, expand_pvalues,
                              is_connected_cluster, ward_cluster)
from desparse.core import standardize
from desparse.desparsify import InferenceConfig, d_mtlasso
from desparse.sim import SimConfig, chain_geometry, grid_geometry, make_gain, simulate


def ward_objective(X, groups):
    return sum(((X[:, g] - X[:, g].mean(axis=1, keepdims=True)) ** 2).sum() for g in groups)


def test_c_equals_p_is_identity():
    G = grid_geometry(3, 4)
    X = np.random.default_rng(0).normal(size=(7, 12))
    cl = ward_cluster(X, G, 12)
    np.testing.assert_array_equal(cl.labels, np.arange(12))
    assert np.all(cl.diameters == 0)


def test_c_equals_one():
    G = grid_geometry(3, 4)
    X = np.random.default_rng(1).normal(size=(7, 12))
    cl = ward_cluster(X, G, 1)
    assert np.all(cl.labels == 0) and cl.sizes.tolist() == [12]
    assert cl.diameters[0] == pytest.approx(G.diameter())


@pytest.mark.parametrize("C", [0, 13])
def test_invalid_c(C):
    with pytest.raises(InvalidC):
        ward_cluster(np.ones((3, 12)), grid_geometry(3, 4), C)


def test_chain_split_matches_exhaustive_oracle():
    rng = np.random.default_rng(2)
    prof = np.concatenate([np.tile(rng.normal(size=(5, 1)), 3), np.tile(rng.normal(size=(5, 1)), 3)], axis=1)
    X = prof + 0.05 * rng.normal(size=(5, 6))
    cl = ward_cluster(X, chain_geometry(6), 2)
    # connected 2-partitions of a chain are the 5 cut points
    costs = [ward_objective(X, [list(range(k)), list(range(k, 6))]) for k in range(1, 6)]
    best = 1 + int(np.argmin(costs))
    assert best == 3
    np.testing.assert_array_equal(cl.labels, [0] * best + [1] * (6 - best))


def test_clusters_are_connected():
    G = grid_geometry(8, 8)
    rng = np.random.default_rng(3)
    for C in (3, 10, 25):
        cl = ward_cluster(rng.normal(size=(6, 64)), G, C)
        assert cl.C == C
        for r in range(C):
            assert is_connected_cluster(G, cl.members(r))


def test_deterministic_under_ties():
    G = grid_geometry(4, 4)
    X = np.zeros((3, 16))  # every merge costs 0
    a = ward_cluster(X, G, 5).labels
    b = ward_cluster(X.copy(), G, 5).labels
    np.testing.assert_array_equal(a, b)


def test_labels_ordered_by_smallest_member():
    G = grid_geometry(5, 5)
    cl = ward_cluster(np.random.default_rng(4).normal(size=(4, 25)), G, 6)
    firsts = [cl.members(r).min() for r in range(6)]
    assert firsts == sorted(firsts)


def test_compress_matches_naive_average():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 8))
    labels = np.array([0, 1, 0, 2, 2, 1, 0, 2])
    cl = Clustering(labels=labels, C=3)
    Z, A = compress(X, cl)
    naive = np.column_stack([X[:, labels == r].mean(axis=1) for r in range(3)])
    np.testing.assert_allclose(A.apply(X), naive, atol=1e-14)
    np.testing.assert_allclose(X @ A.matrix().toarray(), naive, atol=1e-14)
    np.testing.assert_allclose(Z.data, standardize(naive).data, atol=1e-14)
    AtA = (A.matrix().T @ A.matrix()).toarray()
    np.testing.assert_allclose(AtA, np.diag(1.0 / cl.sizes), atol=1e-15)


def test_compress_singletons_and_duplicates():
    X = np.random.default_rng(6).normal(size=(10, 4))
    _, A = compress(X, Clustering(labels=np.arange(4), C=4))
    np.testing.assert_array_equal(A.apply(X), X)
    Xd = np.column_stack([X[:, 0], X[:, 0], X[:, 1]])
    _, A = compress(Xd, Clustering(labels=[0, 0, 1], C=2))
    np.testing.assert_allclose(A.apply(Xd)[:, 0], X[:, 0], atol=1e-15)


def test_expand_pvalues():
    cl = Clustering(labels=[0, 0, 1, 1, 1], C=2)
    np.testing.assert_array_equal(expand_pvalues([0.01, 0.5], cl), [0.01, 0.01, 0.5, 0.5, 0.5])
    np.testing.assert_array_equal(expand_pvalues(np.ones(2), cl), np.ones(5))
    with pytest.raises(ValueError):
        expand_pvalues([0.1], cl)


def test_clustering_validation():
    with pytest.raises(ValueError):
        Clustering(labels=[0, 2], C=3)  # empty cluster 1
    with pytest.raises(ValueError):
        Clustering(labels=[0, 3], C=3)


def test_cd_with_c_equal_p_is_d_mtlasso():
    rng = np.random.default_rng(7)
    G = chain_geometry(10)
    X = standardize(rng.normal(size=(40, 10)))
    Y = rng.normal(size=(40, 3))
    cfg = InferenceConfig(lam=0.1)
    a = cd_mtlasso(X, Y, G, 10, cfg)
    b = d_mtlasso(X, Y, cfg)
    np.testing.assert_allclose(a.pval, b.pval, atol=1e-12)
    np.testing.assert_allclose(a.pval_corrected, np.minimum(1, 10 * b.pval), atol=1e-12)
    assert a.n_tests == 10


def test_cd_clustering_argument_checked():
    G = chain_geometry(6)
    X = np.random.default_rng(8).normal(size=(20, 6))
    with pytest.raises(InvalidC):
        cd_mtlasso(X, np.zeros((20, 2)), G, 3, clustering=Clustering(labels=[0, 0, 0, 1, 1, 1], C=2))


@pytest.mark.slow
def test_cd_null_fwer():
    cfg = SimConfig(rows=8, cols=8, n_sensors=60, amplitude=0.0, T=4)
    G = grid_geometry(8, 8, 5.0)
    X = make_gain(G, 60, "gaussian_kernel", 0)
    hits = 0
    for r in range(200):
        sim = simulate(cfg.replace(seed=r), geometry=G, X=X)
        hits += cd_mtlasso(X, sim.Y, G, 16).pval_corrected.min() <= 0.05
    # 5% nominal plus a binomial 2-sigma margin over 200 runs
    assert hits / 200 <= 0.05 + 2 * np.sqrt(0.05 * 0.95 / 200)
