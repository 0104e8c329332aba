"""Shared domain types and small dense linear algebra.

Everything here is immutable after construction. Arrays handed to the
constructors are copied and flagged read-only so that downstream code can
share them across workers without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra


class DesparseError(Exception):
    """Base class for all errors raised by this package."""


class ConstantColumn(DesparseError, ValueError):
    def __init__(self, j):
        super().__init__(f"column {j} has zero variance")
        self.j = j


class NotPositiveDefinite(DesparseError, np.linalg.LinAlgError):
    pass


class Disconnected(DesparseError, ValueError):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DesignMatrix:
    """An ``n x p`` design, usually column-standardized.

    ``scale`` and ``center`` hold the factors removed by :func:`standardize`
    (``None`` when the matrix was wrapped as is).
    """

    data: np.ndarray
    standardized: bool = False
    center: np.ndarray | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise ValueError(f"design must be 2-D, got shape {data.shape}")
        n, p = data.shape
        if n < 2 or p < 1:
            raise ValueError(f"design needs n >= 2 and p >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("design contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def gram(self) -> np.ndarray:
        """Empirical covariance ``X^T X / n``."""
        return self.data.T @ self.data / self.n


@dataclass(frozen=True)
class MultiResponse:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[1] < 1:
            raise ValueError(f"response must be n x T, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("response contains non-finite entries")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SolverInfo:
    gap: float
    n_iter: int
    converged: bool
    objective: float
    history: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class CoefMatrix:
    """A ``p x T`` coefficient matrix. The row support is recomputed on access."""

    data: np.ndarray
    info: SolverInfo | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        object.__setattr__(self, "data", _frozen(data))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.data != 0, axis=1))

    @property
    def s_hat(self) -> int:
        return int(self.support.size)


@dataclass(frozen=True)
class ToeplitzAR1:
    """Noise covariance ``M[t, u] = sigma2 * rho**|t - u|``."""

    sigma2: float
    rho: float
    T: int

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")

    def correlation(self) -> np.ndarray:
        lags = np.abs(np.subtract.outer(np.arange(self.T), np.arange(self.T)))
        return self.rho ** lags

    def matrix(self) -> np.ndarray:
        return self.sigma2 * self.correlation()

    @cached_property
    def _cho(self):
        try:
            return cho_factor(self.matrix(), lower=True)
        except LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc


def toeplitz_quadform(M: ToeplitzAR1, a) -> float:
    """Return ``a^T M^{-1} a`` through a Cholesky solve."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != M.T:
        raise ValueError(f"vector length {a.size} does not match T={M.T}")
    return float(a @ cho_solve(M._cho, a))


def toeplitz_quadform_rows(M: ToeplitzAR1, A) -> np.ndarray:
    """Row-wise ``A[j] M^{-1} A[j]^T`` for a ``p x T`` matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    sol = cho_solve(M._cho, A.T)
    return np.einsum("jt,tj->j", A, sol)


def standardize(X) -> DesignMatrix:
    """Center columns and scale them to unit empirical variance.

    The scale is ``sqrt(sum(x**2) / n)`` on the centered column, so that the
    diagonal of ``X^T X / n`` is exactly one.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {X.shape}")
    n = X.shape[0]
    center = X.mean(axis=0)
    Xc = X - center
    scale = np.sqrt(np.einsum("ij,ij->j", Xc, Xc) / n)
    tiny = scale <= 1e-12 * np.maximum(1.0, np.abs(center))
    if np.any(tiny):
        raise ConstantColumn(int(np.flatnonzero(tiny)[0]))
    return DesignMatrix(Xc / scale, standardized=True, center=center, scale=scale)


@dataclass(frozen=True)
class Geometry:
    """Feature positions (mm) plus an undirected, positively weighted graph.

    ``edges`` is an ``(m, 2)`` integer array and ``lengths`` the matching
    edge lengths. All-pairs geodesic distances are computed lazily once.
    """

    positions: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        if lengths.shape[0] != edges.shape[0]:
            raise ValueError("one length per edge is required")
        if np.any(lengths <= 0):
            raise ValueError("edge lengths must be positive")
        p = pos.shape[0]
        if edges.size and (edges.min() < 0 or edges.max() >= p):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self loops are not allowed")
        # canonical (lo, hi) pairs; parallel edges keep the shortest length
        edges = np.sort(edges, axis=1)
        order = np.lexsort((lengths, edges[:, 1], edges[:, 0]))
        edges, lengths = edges[order], lengths[order]
        keep = np.ones(len(edges), dtype=bool)
        keep[1:] = np.any(edges[1:] != edges[:-1], axis=1)
        edges, lengths = edges[keep], lengths[keep]
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "edges", _frozen(edges, np.int64))
        object.__setattr__(self, "lengths", _frozen(lengths))
        if p > 1:
            n_comp, _ = connected_components(self.adjacency(), directed=False)
            if n_comp != 1:
                raise Disconnected(f"adjacency graph has {n_comp} components")

    @property
    def p(self) -> int:
        return self.positions.shape[0]

    def adjacency(self) -> csr_matrix:
        p = self.p
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.lengths
        A = csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(p, p),
        )
        return A

    def neighbors(self) -> list[np.ndarray]:
        if "neighbors" not in self._cache:
            A = self.adjacency()
            self._cache["neighbors"] = [
                np.sort(A.indices[A.indptr[k]:A.indptr[k + 1]]) for k in range(self.p)
            ]
        return self._cache["neighbors"]

    def distances(self) -> np.ndarray:
        """Dense ``p x p`` geodesic distance matrix (read-only)."""
        if "dist" not in self._cache:
            D = dijkstra(self.adjacency(), directed=False)
            if not np.all(np.isfinite(D)):
                raise Disconnected("some feature pairs are not connected")
            D.setflags(write=False)
            self._cache["dist"] = D
        return self._cache["dist"]

    def distance_to_set(self, idx) -> np.ndarray:
        """Length-p vector ``min_{k in idx} d(j, k)``; ``inf`` for an empty set."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1)
        if idx.size == 0:
            return np.full(self.p, np.inf)
        return self.distances()[:, idx].min(axis=1)

    def diameter(self) -> float:
        return float(self.distances().max())


def geodesic_distance(G: Geometry, j: int, k: int) -> float:
    if not (0 <= j < G.p and 0 <= k < G.p):
        raise IndexError(f"feature index out of range for p={G.p}")
    d = G.distances()[j, k]
    if not np.isfinite(d):
        raise Disconnected(f"no path between {j} and {k}")
    return float(d)
