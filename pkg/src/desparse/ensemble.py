"""Ensembles of clustered inferences and adaptive quantile aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .cluster import ClusteredResult, cd_mtlasso, ward_cluster
from .core import DesparseError, Geometry, ToeplitzAR1
from .desparsify import InferenceConfig, InferenceResult
from .solvers import _as_array


class EnsembleMemberFailed(DesparseError, RuntimeError):
    def __init__(self, b, cause):
        super().__init__(f"ensemble member {b} failed: {cause!r}")
        self.b = b


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble size, row fraction used to fit each clustering, aggregation floor."""

    B: int = 100
    subsample_fraction: float = 0.10
    gamma_min: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must lie in (0, 1]")
        if not 0 < self.gamma_min < 1:
            raise ValueError("gamma_min must lie in (0, 1)")


def _candidate_gammas(B: int, gamma_min: float):
    """Order-statistic ranks and the gamma each is divided by."""
    b0 = math.floor(gamma_min * B) + 1    # rank of the quantile just above gamma_min
    ranks = [b0]
    gammas = [gamma_min]
    for b in range(math.ceil(gamma_min * B), B + 1):
        if b / B > gamma_min:
            ranks.append(b)
            gammas.append(b / B)
    return np.asarray(ranks) - 1, np.asarray(gammas)


def aggregate_pvalues(P, gamma_min: float = 0.25) -> np.ndarray:
    """Adaptive quantile aggregation of a ``(B, p)`` stack of p-value maps.

    ``min(1, (1 - log gamma_min) * inf_gamma Q_gamma(P[:, j] / gamma))`` with
    ``Q_gamma`` the ``ceil(gamma B)``-th order statistic. The infimum over
    ``gamma in (gamma_min, 1)`` is taken over the finitely many jump points
    of the empirical quantile together with the limit at ``gamma_min``.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.size and (np.nanmin(P) < 0 or np.nanmax(P) > 1):
        raise ValueError("p-values must lie in [0, 1]")
    B = P.shape[0]
    ranks, gammas = _candidate_gammas(B, gamma_min)
    S = np.sort(P, axis=0)
    best = np.min(S[ranks] / gammas[:, None], axis=0)
    return np.minimum(1.0, (1.0 - math.log(gamma_min)) * best)


def _member(b, seed_seq, X, Y, G, C, frac, cfg):
    rng = np.random.default_rng(seed_seq)
    n = X.shape[0]
    m = max(1, math.ceil(frac * n))
    rows = np.sort(rng.choice(n, size=m, replace=False))
    try:
        cl = ward_cluster(X[rows], G, C)
        return cd_mtlasso(X, Y, G, C, cfg, clustering=cl)
    except Exception as exc:  # re-raised with the member index
        raise EnsembleMemberFailed(b, exc) from exc


def ecd_mtlasso(X, Y, G: Geometry, C: int, ecfg: EnsembleConfig = EnsembleConfig(),
                cfg: InferenceConfig = InferenceConfig(), *, n_jobs: int = 1) -> InferenceResult:
    """Ensemble of clustered desparsified multi-task Lassos.

    Each member fits Ward on a row subsample of ``X`` (drawn without
    replacement) and runs :func:`cd_mtlasso` with that clustering on all
    rows. Corrected and raw p-value maps are aggregated separately.
    Members are independent and run through joblib when ``n_jobs != 1``.

    Returns
    -------
    InferenceResult
        ``pval_corrected`` is the aggregated corrected map. ``beta_debiased``
        and ``stat`` are member medians; ``noise`` carries the median
        ``sigma2`` and ``rho``. ``diagnostics["members"]`` keeps per-member
        cluster diameters.
    """
    Xa = np.asarray(_as_array(X), dtype=float)
    Ya = np.asarray(_as_array(Y), dtype=float)
    seeds = np.random.SeedSequence(ecfg.seed).spawn(ecfg.B)
    args = (Xa, Ya, G, C, ecfg.subsample_fraction, cfg)
    if n_jobs == 1:
        members = [_member(b, seeds[b], *args) for b in range(ecfg.B)]
    else:
        members = Parallel(n_jobs=n_jobs)(
            delayed(_member)(b, seeds[b], *args) for b in range(ecfg.B))
    return _combine(members, C, ecfg.gamma_min)


def _combine(members: list[ClusteredResult], C: int, gamma_min: float) -> InferenceResult:
    P_raw = np.stack([m.pval for m in members])
    P_cor = np.stack([m.pval_corrected for m in members])
    T = members[0].noise.T
    noise = ToeplitzAR1(sigma2=float(np.median([m.noise.sigma2 for m in members])),
                        rho=float(np.median([m.noise.rho for m in members])), T=T)
    diam = [m.clustering.diameters for m in members]
    diagnostics = {
        "members": [{"lam": m.diagnostics["lam"], "s_hat": m.s_hat,
                     "mean_cluster_diameter": float(np.mean(d)),
                     "max_cluster_diameter": float(np.max(d))}
                    for m, d in zip(members, diam)],
        "mean_cluster_diameter": float(np.mean([np.mean(d) for d in diam])),
        "max_cluster_diameter": float(np.max([np.max(d) for d in diam])),
    }
    return InferenceResult(
        beta_debiased=np.median(np.stack([m.beta_debiased for m in members]), axis=0),
        stat=np.median(np.stack([m.stat for m in members]), axis=0),
        pval=aggregate_pvalues(P_raw, gamma_min),
        pval_corrected=aggregate_pvalues(P_cor, gamma_min),
        noise=noise, s_hat=int(np.median([m.s_hat for m in members])), n_tests=C,
        excluded=np.all(np.stack([m.excluded for m in members]), axis=0),
        diagnostics=diagnostics)
