"""Spatially constrained Ward clustering and cluster-level compression.

Features are merged agglomeratively, only along edges of the feature
graph, so every cluster stays connected. The compressed design averages the
columns of each cluster; inference on it is then mapped back to features.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix

from .core import DesignMatrix, DesparseError, Geometry, _frozen, standardize
from .desparsify import InferenceConfig, InferenceResult, d_mtlasso
from .solvers import _as_array


class InvalidC(DesparseError, ValueError):
    pass


@dataclass(frozen=True)
class Clustering:
    """A partition of the p features into ``C`` labelled groups.

    Labels run over ``0 .. C-1`` and are ordered by each cluster's smallest
    member. ``diameters`` are geodesic (mm), 0 for singletons.
    """

    labels: np.ndarray
    C: int
    sizes: np.ndarray = None
    diameters: np.ndarray | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.size and (labels.min() < 0 or labels.max() >= self.C):
            raise ValueError("labels must lie in [0, C)")
        sizes = np.bincount(labels, minlength=self.C)
        if np.any(sizes == 0):
            raise ValueError("every cluster must be non-empty")
        object.__setattr__(self, "labels", _frozen(labels, np.int64))
        object.__setattr__(self, "sizes", _frozen(sizes, np.int64))
        if self.diameters is not None:
            object.__setattr__(self, "diameters", _frozen(self.diameters))

    @property
    def p(self) -> int:
        return self.labels.size

    def members(self, r: int) -> np.ndarray:
        return np.flatnonzero(self.labels == r)

    def with_diameters(self, G: Geometry) -> "Clustering":
        return replace(self, diameters=cluster_diameters(self, G))


def cluster_diameters(cl: Clustering, G: Geometry) -> np.ndarray:
    D = G.distances()
    out = np.zeros(cl.C)
    order = np.argsort(cl.labels, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(cl.sizes)])
    for r in range(cl.C):
        idx = order[bounds[r]:bounds[r + 1]]
        if idx.size > 1:
            out[r] = D[np.ix_(idx, idx)].max()
    return out


def is_connected_cluster(G: Geometry, members) -> bool:
    """Breadth-first search restricted to ``members``."""
    members = np.asarray(members, dtype=np.int64)
    if members.size <= 1:
        return members.size == 1
    inside = np.zeros(G.p, dtype=bool)
    inside[members] = True
    nbrs = G.neighbors()
    seen = {int(members[0])}
    frontier = [int(members[0])]
    while frontier:
        nxt = []
        for u in frontier:
            for v in nbrs[u]:
                v = int(v)
                if inside[v] and v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return len(seen) == members.size


def _ward_cost(ca, sa, cb, sb):
    d = ca - cb
    return (sa * sb / (sa + sb)) * float(d @ d)


def ward_cluster(X_sub, G: Geometry, C: int) -> Clustering:
    """Ward agglomeration of the columns of ``X_sub`` along the edges of ``G``.

    The merge cost of clusters a, b is the increase of the within-cluster
    sum of squares, ``|a||b| / (|a|+|b|) * ||mean_a - mean_b||^2``. Ties are
    broken by the smallest pair of cluster ids, a cluster's id being its
    smallest member.
    """
    Xs = np.asarray(_as_array(X_sub), dtype=float)
    if Xs.ndim != 2:
        raise ValueError(f"expected a 2-D design sample, got shape {Xs.shape}")
    p = Xs.shape[1]
    if p != G.p:
        raise ValueError(f"design has {p} columns but the geometry has {G.p} features")
    if not (isinstance(C, (int, np.integer)) and 1 <= C <= p):
        raise InvalidC(f"C must be an integer in [1, {p}], got {C!r}")

    centroid = np.array(Xs.T, dtype=float)  # row k: mean column of cluster k
    size = np.ones(p)
    alive = np.ones(p, dtype=bool)
    version = np.zeros(p, dtype=np.int64)
    parent = np.arange(p)
    nbrs = [set(map(int, a)) for a in G.neighbors()]

    heap = []
    for a, b in G.edges:
        a, b = int(a), int(b)
        heap.append((_ward_cost(centroid[a], 1.0, centroid[b], 1.0), a, b, 0, 0))
    heapq.heapify(heap)

    n_clusters = p
    while n_clusters > C:
        if not heap:
            raise DesparseError(f"no adjacent cluster pair left at {n_clusters} clusters")
        _, a, b, va, vb = heapq.heappop(heap)
        if not (alive[a] and alive[b]) or version[a] != va or version[b] != vb:
            continue
        # a < b always; the merged cluster keeps id a
        sa, sb = size[a], size[b]
        centroid[a] = (sa * centroid[a] + sb * centroid[b]) / (sa + sb)
        size[a] = sa + sb
        alive[b] = False
        parent[b] = a
        version[a] += 1
        merged = (nbrs[a] | nbrs[b]) - {a, b}
        for k in nbrs[b]:
            nbrs[k].discard(b)
        nbrs[b] = set()
        nbrs[a] = merged
        for k in merged:
            nbrs[k].add(a)
            lo, hi = (a, k) if a < k else (k, a)
            cost = _ward_cost(centroid[a], size[a], centroid[k], size[k])
            heapq.heappush(heap, (cost, lo, hi, int(version[lo]), int(version[hi])))
        n_clusters -= 1

    # resolve parent chains; ids are smallest members so roots come first
    root = parent.copy()
    for j in range(p):
        root[j] = root[root[j]]
    _, labels = np.unique(root, return_inverse=True)
    return Clustering(labels=labels, C=C).with_diameters(G)


@dataclass(frozen=True)
class CompressionMap:
    """The ``p x C`` averaging matrix, stored as labels and cluster sizes."""

    labels: np.ndarray
    sizes: np.ndarray

    @property
    def p(self) -> int:
        return self.labels.size

    @property
    def C(self) -> int:
        return self.sizes.size

    def matrix(self) -> csr_matrix:
        vals = 1.0 / self.sizes[self.labels]
        return csr_matrix((vals, (np.arange(self.p), self.labels)), shape=(self.p, self.C))

    def apply(self, X) -> np.ndarray:
        """``X A`` without forming ``A``."""
        X = np.asarray(_as_array(X), dtype=float)
        Z = np.zeros((X.shape[0], self.C))
        np.add.at(Z.T, self.labels, X.T)
        return Z / self.sizes


def compress(X, cl: Clustering) -> tuple[DesignMatrix, CompressionMap]:
    """Cluster-averaged design ``Z = X A``, re-standardized column-wise."""
    Xa = _as_array(X)
    if Xa.shape[1] != cl.p:
        raise ValueError(f"design has {Xa.shape[1]} columns, clustering covers {cl.p}")
    A = CompressionMap(labels=cl.labels, sizes=cl.sizes)
    return standardize(A.apply(Xa)), A


def expand_pvalues(q, cl: Clustering) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[0] != cl.C:
        raise ValueError(f"expected {cl.C} cluster values, got {q.shape[0]}")
    return q[cl.labels]


def cd_mtlasso(X, Y, G: Geometry, C: int, cfg: InferenceConfig = InferenceConfig(), *,
               clustering: Clustering | None = None) -> InferenceResult:
    """Clustered desparsified multi-task Lasso.

    Parameters
    ----------
    X : DesignMatrix or ndarray of shape (n, p)
    Y : MultiResponse or ndarray of shape (n, T)
    G : Geometry
        Feature graph constraining the clustering.
    C : int
        Number of clusters.
    cfg : InferenceConfig
    clustering : Clustering, optional
        Precomputed clustering; by default Ward is run on all rows of ``X``.

    Returns
    -------
    InferenceResult
        Feature-level maps. Each feature inherits its cluster's statistic and
        p-values; ``pval_corrected`` is Bonferroni-corrected by ``C``. The
        clustering (with diameters) is attached as ``result.clustering``.
    """
    Xa = _as_array(X)
    if clustering is None:
        clustering = ward_cluster(Xa, G, C)
    elif clustering.C != C:
        raise InvalidC(f"clustering has {clustering.C} clusters, C={C}")
    if clustering.diameters is None:
        clustering = clustering.with_diameters(G)
    Z, _ = compress(Xa, clustering)
    res = d_mtlasso(Z, Y, cfg)
    lab = clustering.labels
    diagnostics = dict(res.diagnostics)
    diagnostics["cluster_diameters"] = clustering.diameters.tolist()
    diagnostics["cluster_excluded"] = diagnostics.pop("excluded")
    return ClusteredResult(
        beta_debiased=res.beta_debiased[lab], stat=res.stat[lab], pval=res.pval[lab],
        pval_corrected=res.pval_corrected[lab], noise=res.noise, s_hat=res.s_hat,
        n_tests=C, excluded=res.excluded[lab], diagnostics=diagnostics,
        clustering=clustering, cluster_result=res)


@dataclass(frozen=True)
class ClusteredResult(InferenceResult):
    clustering: Clustering | None = field(default=None, compare=False)
    cluster_result: InferenceResult | None = field(default=None, repr=False, compare=False)
