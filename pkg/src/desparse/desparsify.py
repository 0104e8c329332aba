"""Desparsified multi-task Lasso: debiased coefficients and Fisher p-values.

The pipeline (:func:`d_mtlasso`) runs, in order: cross-validated multi-task
Lasso, residuals and support size, AR(1) noise estimation, nodewise Lasso
score vectors, the debiasing correction, and finally the statistic

    f_j = n * ||b_j||^2_{M^-1} / (T * Omega_jj)

compared against ``F(T, n - s_hat)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import _kernels
from .core import CoefMatrix, DesparseError, ToeplitzAR1, toeplitz_quadform_rows
from .solvers import (CVConfig, LassoConfig, MaxIterExceeded, _as_array, _fortran,
                      fit_mtlasso_cv, solve_lasso, solve_mtlasso)


class DegenerateScore(DesparseError, ValueError):
    def __init__(self, j):
        super().__init__(f"score vector for feature {j} cannot separate it from the other columns")
        self.j = j


class SupportTooLarge(DesparseError, ValueError):
    pass


class ZeroResidual(DesparseError, ValueError):
    pass


class NegativeAutocorrelation(UserWarning):
    """Estimated lag-1 correlation was negative and has been clipped to 0."""


RHO_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class NodewiseConfig:
    c: float = 0.005
    solver: LassoConfig = LassoConfig()

    def __post_init__(self):
        if not 0 < self.c <= 1:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")


@dataclass(frozen=True)
class InferenceConfig:
    """Settings for :func:`d_mtlasso`.

    ``lam`` fixes the multi-task Lasso penalty and skips cross-validation.
    ``noise_model="iid"`` forces ``rho_hat = 0``.
    """

    cv: CVConfig = CVConfig()
    nodewise: NodewiseConfig = NodewiseConfig()
    solver: LassoConfig = LassoConfig()
    lam: float | None = None
    noise_model: str = "ar1"
    n_jobs: int = 1

    def __post_init__(self):
        if self.noise_model not in ("ar1", "iid"):
            raise ValueError(f"unknown noise_model {self.noise_model!r}")


@dataclass(frozen=True)
class ScoreVectors:
    z: np.ndarray
    omega_diag: np.ndarray
    zx_dot: np.ndarray
    alphas: np.ndarray
    excluded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def omega(self, j: int, k: int) -> float:
        """Off-diagonal precision entry ``n z_j.z_k / (|z_j.X_j| |z_k.X_k|)``."""
        n = self.z.shape[0]
        return float(n * (self.z[:, j] @ self.z[:, k])
                     / (abs(self.zx_dot[j]) * abs(self.zx_dot[k])))


@dataclass(frozen=True)
class InferenceResult:
    """Per-feature output of the inference pipelines.

    ``n_tests`` is the Bonferroni factor that produced ``pval_corrected``
    (p for d-MTLasso, C for the clustered variants). Excluded features have
    ``stat = 0`` and ``pval = 1``.
    """

    beta_debiased: np.ndarray
    stat: np.ndarray
    pval: np.ndarray
    pval_corrected: np.ndarray
    noise: ToeplitzAR1
    s_hat: int
    n_tests: int
    excluded: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def p(self) -> int:
        return self.pval.shape[0]


def _nodewise_one(Xf, j, lam, solver):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxIterExceeded)
        coef = solve_lasso(None, Xf[:, j], solver.with_lam(lam), skip=j, _Xf=Xf)
    beta = coef.data[:, 0]
    z = Xf[:, j] - Xf @ beta
    return z, coef.info


def nodewise_scores(X, cfg: NodewiseConfig = NodewiseConfig(), *, on_degenerate: str = "raise",
                    n_jobs: int = 1) -> ScoreVectors:
    """Residuals of the Lasso regression of every column on all the others.

    The penalty for column j is ``c * max_{k != j} |X_k^T X_j| / n``. A
    feature is degenerate when ``|z_j^T X_j| < 1e-12 n`` or when its score
    correlates with another column as strongly as with its own (exact
    collinearity); ``on_degenerate`` is ``"raise"`` or ``"exclude"``.
    """
    if on_degenerate not in ("raise", "exclude"):
        raise ValueError(f"on_degenerate must be 'raise' or 'exclude', got {on_degenerate!r}")
    Xf = _fortran(X)
    n, p = Xf.shape
    if p < 2:
        raise ValueError("nodewise regressions need p >= 2")
    gram = Xf.T @ Xf
    off = np.abs(gram)
    np.fill_diagonal(off, 0.0)
    alphas = cfg.c * off.max(axis=0) / n

    if n_jobs == 1:
        out = [_nodewise_one(Xf, j, alphas[j], cfg.solver) for j in range(p)]
    else:
        out = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_nodewise_one)(Xf, j, alphas[j], cfg.solver) for j in range(p))
    Z = np.column_stack([o[0] for o in out])
    zx = np.einsum("ij,ij->j", Z, Xf)
    zX = np.abs(Z.T @ Xf)
    np.fill_diagonal(zX, 0.0)
    cross = zX.max(axis=1)
    bad = (np.abs(zx) < 1e-12 * n) | (cross >= (1.0 - 1e-9) * np.abs(zx))
    if np.any(bad) and on_degenerate == "raise":
        raise DegenerateScore(int(np.flatnonzero(bad)[0]))
    zz = np.einsum("ij,ij->j", Z, Z)
    with np.errstate(divide="ignore", invalid="ignore"):
        omega = np.where(bad, np.inf, n * zz / zx**2)
    for a in (Z, omega, zx, alphas, bad):
        a.setflags(write=False)
    return ScoreVectors(z=Z, omega_diag=omega, zx_dot=zx, alphas=alphas, excluded=bad)


def debias(X, Y, B_mtl, S: ScoreVectors) -> np.ndarray:
    """Debiased rows ``(z_j^T Y - sum_{k != j} z_j^T X_k B_k) / z_j^T X_j``."""
    X = _as_array(X)
    Y = np.asarray(_as_array(Y), dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    B = np.asarray(B_mtl.data if isinstance(B_mtl, CoefMatrix) else B_mtl, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.shape != (X.shape[1], Y.shape[1]):
        raise ValueError(f"coefficient shape {B.shape} does not match ({X.shape[1]}, {Y.shape[1]})")
    zx = S.zx_dot
    num = S.z.T @ Y - (S.z.T @ X) @ B + zx[:, None] * B
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / zx[:, None]
    out[S.excluded] = 0.0
    return out


def estimate_noise(residuals, s_hat: int, *, noise_model: str = "ar1") -> ToeplitzAR1:
    """Median-based AR(1) noise estimate from ``n x T`` residuals."""
    E = np.asarray(residuals, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    n, T = E.shape
    if s_hat >= n:
        raise SupportTooLarge(f"estimated support size {s_hat} >= n={n}")
    if not np.any(E):
        raise ZeroResidual("all residuals are zero; the noise level cannot be estimated")
    sigma2 = float(np.median(np.einsum("it,it->t", E, E) / (n - s_hat)))
    if sigma2 <= 0.0:
        raise ZeroResidual("median residual energy is zero")
    rho = 0.0
    if T >= 2 and noise_model == "ar1":
        Ec = E - E.mean(axis=0)
        norms = np.sqrt(np.einsum("it,it->t", Ec, Ec))
        with np.errstate(divide="ignore", invalid="ignore"):
            lag = np.einsum("it,it->t", Ec[:, :-1], Ec[:, 1:]) / (norms[:-1] * norms[1:])
        lag = lag[np.isfinite(lag)]
        rho = float(np.median(lag)) if lag.size else 0.0
        if rho < 0.0:
            warnings.warn(f"negative lag-1 residual correlation {rho:.3g} clipped to 0",
                          NegativeAutocorrelation, stacklevel=2)
            rho = 0.0
        rho = min(rho, RHO_MAX)
    return ToeplitzAR1(sigma2=sigma2, rho=rho, T=T)


def fisher_sf(x, d1, d2):
    """Survival function of ``F(d1, d2)`` through the regularized incomplete beta."""
    return _kernels.f_sf(x, d1, d2)


def chi2_sf(x, k):
    return _kernels.chi2_sf(x, k)


def test_statistics(beta_deb, S: ScoreVectors, M_hat: ToeplitzAR1, s_hat: int):
    """Return ``(stat, pval)`` comparing each debiased row with ``F(T, n - s_hat)``."""
    B = np.asarray(beta_deb, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = S.z.shape[0]
    T = B.shape[1]
    if n - s_hat < 1:
        raise SupportTooLarge(f"n - s_hat = {n - s_hat} < 1")
    quad = toeplitz_quadform_rows(M_hat, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = n * quad / (T * S.omega_diag)
    stat = np.where(S.excluded | ~np.isfinite(stat), 0.0, np.maximum(stat, 0.0))
    pval = np.asarray(fisher_sf(stat, T, n - s_hat), dtype=float)
    pval = np.clip(pval, 0.0, 1.0)
    pval[S.excluded] = 1.0
    return stat, pval


test_statistics.__test__ = False  # not a pytest test


def bonferroni(pval, n_tests: int) -> np.ndarray:
    return np.minimum(1.0, n_tests * np.asarray(pval, dtype=float))


def d_mtlasso(X, Y, cfg: InferenceConfig = InferenceConfig(), *,
              scores: ScoreVectors | None = None) -> InferenceResult:
    """Desparsified multi-task Lasso on a standardized design.

    ``scores`` may carry precomputed nodewise score vectors for this exact
    design (they do not depend on ``Y``), which saves the p nodewise
    regressions when the same design is analysed repeatedly.
    """
    Xa = _as_array(X)
    Ya = np.asarray(_as_array(Y), dtype=float)
    if Ya.ndim == 1:
        Ya = Ya[:, None]
    n, p = Xa.shape
    if Ya.shape[0] != n:
        raise ValueError(f"Y has {Ya.shape[0]} rows, X has {n}")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MaxIterExceeded)
        if cfg.lam is None:
            coef, lam, path = fit_mtlasso_cv(Xa, Ya, cfg.cv, cfg.solver)
        else:
            lam, path = float(cfg.lam), None
            coef = solve_mtlasso(Xa, Ya, cfg.solver.with_lam(lam))
    resid = Ya - Xa @ coef.data
    s_hat = coef.s_hat
    noise = estimate_noise(resid, s_hat, noise_model=cfg.noise_model)
    if scores is None:
        scores = nodewise_scores(Xa, cfg.nodewise, on_degenerate="exclude", n_jobs=cfg.n_jobs)
    beta = debias(Xa, Ya, coef.data, scores)
    stat, pval = test_statistics(beta, scores, noise, s_hat)
    diagnostics = {
        "lam": lam,
        "cv_path": None if path is None else path.tolist(),
        "mtl_gap": coef.info.gap,
        "mtl_n_iter": coef.info.n_iter,
        "mtl_converged": coef.info.converged,
        "excluded": np.flatnonzero(scores.excluded).tolist(),
    }
    return InferenceResult(
        beta_debiased=beta, stat=stat, pval=pval, pval_corrected=bonferroni(pval, p),
        noise=noise, s_hat=s_hat, n_tests=p, excluded=np.asarray(scores.excluded).copy(),
        diagnostics=diagnostics)


def d_lasso(X, y, cfg: InferenceConfig = InferenceConfig(), **kw) -> InferenceResult:
    """Single-task desparsified Lasso (the ``T = 1`` case of :func:`d_mtlasso`)."""
    y = np.asarray(_as_array(y), dtype=float)
    if y.ndim == 2 and y.shape[1] != 1:
        raise ValueError("d_lasso expects a single response column")
    return d_mtlasso(X, y.reshape(-1, 1), cfg, **kw)
