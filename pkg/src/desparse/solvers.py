"""Lasso and multi-task Lasso by (block) coordinate descent.

Both solvers minimize

    (1 / 2n) ||Y - X B||_F^2 + lam * sum_j ||B_j.||_2

(the Lasso being the ``T = 1`` case) and stop on the duality gap. The dual
point is the residual rescaled into the dual-feasible set
``max_j ||X_j^T U||_2 <= n * lam``. The gap tolerance is relative to the
objective at ``B = 0``, i.e. ``||Y||^2 / 2n``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import CoefMatrix, DesignMatrix, MultiResponse, SolverInfo


class MaxIterExceeded(UserWarning):
    """Solver hit ``max_iter`` before reaching the gap tolerance.

    Issued as a warning; the returned coefficients carry the last iterate
    and ``info.gap`` holds the achieved duality gap.
    """


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 0.0
    max_iter: int = 10000
    tol: float = 1e-6
    check_every: int = 10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")

    def with_lam(self, lam: float) -> "LassoConfig":
        return LassoConfig(lam=float(lam), max_iter=self.max_iter, tol=self.tol,
                           check_every=self.check_every)


@dataclass(frozen=True)
class CVConfig:
    n_lambdas: int = 15
    lambda_min_ratio: float = 0.01
    n_folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError(f"n_folds must be >= 2, got {self.n_folds}")
        if self.n_lambdas < 1:
            raise ValueError(f"n_lambdas must be >= 1, got {self.n_lambdas}")
        if not 0 < self.lambda_min_ratio <= 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1]")


def _as_array(X):
    return X.data if isinstance(X, (DesignMatrix, MultiResponse)) else np.asarray(X, dtype=float)


def _fortran(X):
    return np.asfortranarray(_as_array(X), dtype=float)


def lambda_max_mtl(X, Y) -> float:
    """Smallest ``lam`` with an all-zero solution: ``max_j ||X_j^T Y||_2 / n``."""
    X = _as_array(X)
    Y = _as_array(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    xty = X.T @ Y
    return float(np.sqrt(np.max(np.einsum("jt,jt->j", xty, xty)))) / n


def lambda_max_lasso(X, y) -> float:
    X = _as_array(X)
    y = np.asarray(_as_array(y), dtype=float).reshape(-1)
    return float(np.max(np.abs(X.T @ y))) / X.shape[0]


def _finish(B, n_iter, gap, history, cfg, tol_abs, obj):
    converged = bool(gap <= tol_abs)
    if not converged:
        warnings.warn(
            f"coordinate descent stopped after {n_iter} sweeps with duality gap "
            f"{gap:.3g} (target {tol_abs:.3g})", MaxIterExceeded, stacklevel=3)
    info = SolverInfo(gap=float(gap), n_iter=int(n_iter), converged=converged,
                      objective=float(obj), history=history)
    return CoefMatrix(B, info=info)


def mtl_objective(X, Y, B, lam) -> float:
    X, Y, B = _as_array(X), _as_array(Y), np.asarray(_as_array(B), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if B.ndim == 1:
        B = B[:, None]
    R = Y - X @ B
    return 0.5 * float(np.sum(R * R)) / X.shape[0] + lam * float(np.sum(np.linalg.norm(B, axis=1)))


def solve_lasso(X, y, cfg: LassoConfig, beta0=None, *, skip: int = -1,
                track: bool = False, _Xf=None) -> CoefMatrix:
    """Lasso ``(1/2n)||y - X b||^2 + lam ||b||_1`` by cyclic coordinate descent.

    ``skip`` drops one column from the model (its coefficient stays 0).
    ``track=True`` records the objective after every sweep in
    ``coef.info.history`` for debugging.
    """
    Xf = _Xf if _Xf is not None else _fortran(X)
    y = np.ascontiguousarray(np.asarray(_as_array(y), dtype=float).reshape(-1))
    n, p = Xf.shape
    if y.shape[0] != n:
        raise ValueError(f"y has {y.shape[0]} rows, X has {n}")
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float).reshape(-1)
    p0 = 0.5 * float(y @ y) / n
    tol_abs = cfg.tol * p0
    if p0 == 0.0:
        return _finish(np.zeros(p), 0, 0.0, np.empty(0) if track else None, cfg, 0.0, 0.0)
    n_iter, gap, hist = _kernels.lasso_cd(Xf, y, beta, float(cfg.lam), int(cfg.max_iter),
                                          float(tol_abs), int(cfg.check_every), int(skip),
                                          bool(track))
    obj = mtl_objective(Xf, y, beta, cfg.lam)
    return _finish(beta, n_iter, gap, hist if track else None, cfg, tol_abs, obj)


def solve_mtlasso(X, Y, cfg: LassoConfig, B0=None, *, track: bool = False) -> CoefMatrix:
    """Multi-task Lasso with the row-wise l2,1 penalty by block coordinate descent."""
    Xf = _fortran(X)
    Y = np.asarray(_as_array(Y), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = np.asfortranarray(Y)
    n, p = Xf.shape
    if Y.shape[0] != n:
        raise ValueError(f"Y has {Y.shape[0]} rows, X has {n}")
    T = Y.shape[1]
    B = np.zeros((p, T)) if B0 is None else np.array(B0, dtype=float).reshape(p, T)
    p0 = 0.5 * float(np.sum(Y * Y)) / n
    tol_abs = cfg.tol * p0
    if p0 == 0.0:
        return _finish(np.zeros((p, T)), 0, 0.0, np.empty(0) if track else None, cfg, 0.0, 0.0)
    n_iter, gap, hist = _kernels.mtl_bcd(Xf, Y, B, float(cfg.lam), int(cfg.max_iter),
                                         float(tol_abs), int(cfg.check_every), -1, bool(track))
    obj = mtl_objective(Xf, Y, B, cfg.lam)
    return _finish(B, n_iter, gap, hist if track else None, cfg, tol_abs, obj)


def lambda_grid(lam_max: float, cv: CVConfig) -> np.ndarray:
    """Decreasing log-uniform grid from ``lam_max`` to ``lam_max * lambda_min_ratio``."""
    if cv.n_lambdas == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, lam_max * cv.lambda_min_ratio, cv.n_lambdas)


def kfold_indices(n: int, n_folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, n_folds)]


def cross_validate(X, Y, cv: CVConfig = CVConfig(), solver: LassoConfig = LassoConfig()):
    """K-fold cross-validation of the multi-task Lasso penalty.

    The grid is built from ``lambda_max_mtl`` on the full data; each fold is
    solved along the decreasing grid with warm starts. Returns
    ``(lambda_best, path)`` where ``path`` is an ``(n_lambdas, 2)`` array of
    ``(lambda, mean held-out squared error)``.
    """
    X = _as_array(X)
    Y = np.asarray(_as_array(Y), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n < cv.n_folds:
        raise ValueError(f"need n >= n_folds, got n={n}, n_folds={cv.n_folds}")
    lmax = lambda_max_mtl(X, Y)
    if lmax == 0.0:
        return 0.0, np.array([[0.0, float(np.mean(Y * Y))]])
    grid = lambda_grid(lmax, cv)
    errors = np.zeros((cv.n_folds, grid.size))
    for k, test in enumerate(kfold_indices(n, cv.n_folds, cv.seed)):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        Xtr, Ytr = X[train], Y[train]
        Xte, Yte = X[test], Y[test]
        B = None
        for i, lam in enumerate(grid):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", MaxIterExceeded)
                coef = solve_mtlasso(Xtr, Ytr, solver.with_lam(lam), B0=B)
            B = coef.data
            resid = Yte - Xte @ B
            errors[k, i] = np.mean(resid * resid)
    mean_err = errors.mean(axis=0)
    best = int(np.argmin(mean_err))
    return float(grid[best]), np.column_stack([grid, mean_err])


def fit_mtlasso_cv(X, Y, cv: CVConfig = CVConfig(), solver: LassoConfig = LassoConfig()):
    """Cross-validate the penalty, then refit on all rows. Returns ``(coef, lam, path)``."""
    lam, path = cross_validate(X, Y, cv, solver)
    coef = solve_mtlasso(X, Y, solver.with_lam(lam))
    return coef, lam, path
