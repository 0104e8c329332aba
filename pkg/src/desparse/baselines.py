"""Ridge (minimum-norm) inverse kernel and its noise-normalized variants.

Both dSPM and sLORETA scale the ridge estimate ``K Y`` row by row; each
time column is handled independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .solvers import _as_array


@dataclass(frozen=True)
class RidgeKernel:
    """``K = X^T (X X^T + lam I)^{-1}``, shape ``(p, n)``."""

    K: np.ndarray
    lam: float

    def apply(self, Y) -> np.ndarray:
        Y = np.asarray(_as_array(Y), dtype=float)
        return self.K @ (Y[:, None] if Y.ndim == 1 else Y)


def default_lambda(X, snr: float = 3.0) -> float:
    """``trace(X X^T) / n / snr^2``."""
    X = _as_array(X)
    return float(np.sum(X * X)) / X.shape[0] / snr**2


def ridge_kernel(X, lam: float | None = None) -> RidgeKernel:
    X = np.asarray(_as_array(X), dtype=float)
    if lam is None:
        lam = default_lambda(X)
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    n = X.shape[0]
    gram = X @ X.T
    gram[np.diag_indices(n)] += lam
    K = cho_solve(cho_factor(gram, lower=True), X).T
    return RidgeKernel(K=K, lam=float(lam))


def _kernel(X, lam):
    return lam if isinstance(lam, RidgeKernel) else ridge_kernel(X, lam)


def dspm(X, Y, lam=None, sigma2: float = 1.0) -> np.ndarray:
    """dSPM map: ridge estimate divided by ``sqrt(sigma2 [K K^T]_jj)``.

    ``lam`` may also be a precomputed :class:`RidgeKernel`.
    """
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    rk = _kernel(X, lam)
    norm = np.sqrt(sigma2 * np.einsum("jn,jn->j", rk.K, rk.K))
    return rk.apply(Y) / norm[:, None]


def sloreta(X, Y, lam=None, sigma2: float = 1.0) -> np.ndarray:
    """sLORETA map: ridge estimate divided by ``sqrt([K (sigma2 I + X X^T) K^T]_jj)``."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    Xa = np.asarray(_as_array(X), dtype=float)
    rk = _kernel(Xa, lam)
    KX = rk.K @ Xa
    var = sigma2 * np.einsum("jn,jn->j", rk.K, rk.K) + np.einsum("jk,jk->j", KX, KX)
    return rk.apply(Y) / np.sqrt(var)[:, None]
