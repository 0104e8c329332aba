"""Localization and error-control metrics with a spatial tolerance.

A discovery j is a δ-error when ``d(j, k) >= delta`` for every true
feature k, i.e. when it lies in ``N^delta``, the complement of the support
dilated by delta. With ``delta = 0`` this reduces to ordinary false
discoveries (support features themselves are never errors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Geometry


@dataclass(frozen=True)
class SupportSpec:
    true_support: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        s = np.unique(np.asarray(self.true_support, dtype=np.int64).reshape(-1))
        if s.size and s.min() < 0:
            raise ValueError("support indices must be non-negative")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        object.__setattr__(self, "true_support", s)

    def far_set(self, G: Geometry) -> np.ndarray:
        """Boolean mask of ``N^delta``."""
        if self.true_support.size and self.true_support.max() >= G.p:
            raise ValueError("support index out of range")
        d = G.distance_to_set(self.true_support)
        far = d >= self.delta
        far[self.true_support] = False
        return far


def ple(amplitude, true_source, G: Geometry) -> float:
    """Geodesic distance from the peak of ``|amplitude|`` to the true source.

    ``true_source`` may also be a set of indices, in which case the distance
    to the nearest one is returned. ``np.argmax`` returns the first maximum,
    so ties go to the lowest index.
    """
    a = np.abs(np.asarray(amplitude, dtype=float).reshape(-1))
    if a.size != G.p or not np.all(np.isfinite(a)):
        raise ValueError("amplitude map must be finite with one entry per feature")
    src = np.asarray(true_source, dtype=np.int64).reshape(-1)
    if src.size == 0:
        raise ValueError("true_source is empty")
    return float(G.distances()[int(np.argmax(a)), src].min())


def spatial_dispersion(amplitude, true_support, G: Geometry) -> float:
    """Amplitude-weighted RMS geodesic distance to the support."""
    a = np.abs(np.asarray(amplitude, dtype=float).reshape(-1))
    w = a * a
    tot = w.sum()
    if tot == 0:
        return 0.0
    d = G.distance_to_set(np.asarray(true_support, dtype=np.int64))
    return float(np.sqrt(np.sum(w * d * d) / tot))


def delta_fwer(pval_runs, spec, G: Geometry, alpha: float = 0.05) -> float:
    """Fraction of runs with at least one discovery in ``N^delta``.

    ``spec`` is one :class:`SupportSpec` shared by all runs or a list with
    one per run. Runs whose ``N^delta`` is empty never count.
    """
    runs = [np.asarray(p, dtype=float).reshape(-1) for p in pval_runs]
    if not runs:
        raise ValueError("no runs given")
    specs = spec if isinstance(spec, (list, tuple)) else [spec] * len(runs)
    if len(specs) != len(runs):
        raise ValueError("one SupportSpec per run is required")
    hits = 0
    for p, s in zip(runs, specs):
        far = s.far_set(G)
        if far.any() and p[far].min() <= alpha:
            hits += 1
    return hits / len(runs)


def delta_precision_recall(pvals, spec: SupportSpec, G: Geometry, *,
                           delta_recall: bool = True, thresholds=None) -> np.ndarray:
    """δ-precision and recall of ``{j : p_j <= t}`` for a sweep of thresholds.

    Parameters
    ----------
    pvals : array of shape (p,)
    spec : SupportSpec
    G : Geometry
    delta_recall : bool, default True
        A true feature k counts as recalled when it is selected or some
        selected j has ``d(j, k) < delta``. With False, plain recall.
    thresholds : array, optional
        Defaults to the sorted unique p-values.

    Returns
    -------
    ndarray of shape (m, 3)
        Rows ``(threshold, precision, recall)``. Empty selections get
        precision 1.
    """
    p = np.asarray(pvals, dtype=float).reshape(-1)
    supp = spec.true_support
    far = spec.far_set(G)
    ts = np.unique(p) if thresholds is None else np.asarray(thresholds, dtype=float)
    D = G.distances()[:, supp] if supp.size else np.zeros((G.p, 0))
    near = D < spec.delta  # (p, |S|)
    # threshold at which each true feature is first recalled
    if supp.size:
        cover = near.copy()
        cover[supp, np.arange(supp.size)] = True
        if not delta_recall:
            cover = np.zeros_like(cover)
            cover[supp, np.arange(supp.size)] = True
        first = np.where(cover, p[:, None], np.inf).min(axis=0)
    else:
        first = np.zeros(0)
    out = np.empty((ts.size, 3))
    for i, t in enumerate(ts):
        sel = p <= t
        k = sel.sum()
        prec = 1.0 if k == 0 else 1.0 - far[sel].sum() / k
        rec = float(np.mean(first <= t)) if supp.size else 0.0
        out[i] = (t, prec, rec)
    return out


def interpolated_precision(curve, recall_grid) -> np.ndarray:
    """Best precision attainable at recall at least r, for each r in ``recall_grid``.

    ``curve`` is the output of :func:`delta_precision_recall`. Grid points
    beyond the largest reached recall get precision 0.
    """
    curve = np.asarray(curve, dtype=float).reshape(-1, 3)
    prec, rec = curve[:, 1], curve[:, 2]
    out = np.zeros(len(recall_grid))
    for i, r in enumerate(recall_grid):
        ok = rec >= r
        if ok.any():
            out[i] = prec[ok].max()
    return out
