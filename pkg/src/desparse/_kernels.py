"""Hot inner loops: coordinate descent sweeps and special-function series.

Two interchangeable implementations live here. The numba versions are
compiled with ``@njit``; the numpy versions run the same algorithm with
vectorized per-coordinate updates. Set ``DESPARSE_DISABLE_NUMBA=1`` to force
the numpy path (numba is also skipped when it cannot be imported).

Both paths share the same signatures:

    lasso_cd(X, y, beta, lam, max_iter, tol_abs, check_every, skip, track)
        -> (n_iter, gap, history)
    mtl_bcd(X, Y, B, lam, max_iter, tol_abs, check_every, skip, track)
        -> (n_iter, gap, history)

The Lasso is run as the single-column case of the multi-task kernel.

``beta``/``B`` are updated in place. ``X`` should be Fortran-ordered for
speed. ``skip`` excludes one column (used by nodewise regressions so the
design never has to be copied); pass -1 to use every column.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLE = os.environ.get("DESPARSE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLE:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------
#
# Solver layout (shared by both paths). Each outer round computes the full
# duality gap, which also yields every column's dual correlation
# ||X_j^T R||. If the gap is too large, a working set is formed from the
# nonzero rows plus the columns with the largest correlations (at least
# doubling each round), and cyclic sweeps run on that set until its own
# gap falls below tol / 2. Every 5 restricted sweeps the iterates are
# Anderson-extrapolated; the extrapolated point is kept only when it
# lowers the objective. Sweeps count toward max_iter.

_K = 5
_WS_MIN = 10


def _gap_np(X, Y, B, R, lam, cols):
    """Duality gap with the dual point scaled over ``cols``, plus their correlations."""
    n = X.shape[0]
    if cols.size:
        xtr = X[:, cols].T @ R
        corr = np.sqrt(np.einsum("jt,jt->j", xtr, xtr))
        dual_norm = corr.max()
    else:
        corr = np.zeros(0)
        dual_norm = 0.0
    scale = 1.0 if dual_norm <= n * lam else n * lam / dual_norm
    rr = np.sum(R * R)
    primal = 0.5 * rr / n + lam * np.sum(np.sqrt(np.einsum("jt,jt->j", B, B)))
    dual = (scale * np.sum(R * Y) - 0.5 * scale * scale * rr) / n
    return primal - dual, corr


def _sweep_np(X, R, B, nrm, nlam, cols):
    for j in cols:
        xj = X[:, j]
        old = B[j].copy()
        rho = xj @ R + nrm[j] * old
        norm_rho = np.sqrt(rho @ rho)
        if norm_rho <= nlam:
            new = np.zeros_like(old)
        else:
            new = (1.0 - nlam / norm_rho) / nrm[j] * rho
        delta = new - old
        if np.any(delta != 0.0):
            R -= np.outer(xj, delta)
            B[j] = new


def _objective_np(R, B, lam, n):
    return 0.5 * np.sum(R * R) / n + lam * np.sum(np.sqrt(np.einsum("jt,jt->j", B, B)))


def _anderson_weights(U):
    """Affine weights minimizing ``||sum_k c_k U_k||`` or None when ill-posed."""
    C = U @ U.T
    scale = np.trace(C)
    if not scale > 0.0:
        return None
    C = C / scale + 1e-10 * np.eye(C.shape[0])
    try:
        z = np.linalg.solve(C, np.ones(C.shape[0]))
    except np.linalg.LinAlgError:
        return None
    tot = z.sum()
    if not np.isfinite(tot) or tot == 0.0:
        return None
    return z / tot


def _anderson_np(X, Y, B, R, lam, active, hist):
    n = X.shape[0]
    c = _anderson_weights(np.diff(hist, axis=0))
    if c is None:
        return False
    Ba = (c[:, None] * hist[1:]).sum(axis=0).reshape(active.size, -1)
    Re = Y - X[:, active] @ Ba
    Bfull = B.copy()
    Bfull[active] = Ba
    if _objective_np(Re, Bfull, lam, n) < _objective_np(R, B, lam, n):
        B[active] = Ba
        R[...] = Re
        return True
    return False


def mtl_bcd_np(X, Y, B, lam, max_iter, tol_abs, check_every, skip, track):
    n, p = X.shape
    nrm = np.einsum("ij,ij->j", X, X)
    usable = nrm > 0.0
    if skip >= 0:
        usable[skip] = False
    full = np.flatnonzero(usable)
    R = Y - X @ B
    nlam = n * lam
    history = np.empty(max_iter if track else 0)
    it = 0
    prev = 0
    while True:
        gap, corr = _gap_np(X, Y, B, R, lam, full)
        if gap <= tol_abs or it >= max_iter:
            break
        nz = np.any(B[full] != 0.0, axis=1)
        size = min(full.size, max(_WS_MIN, 2 * int(nz.sum()), 2 * prev))
        prev = size
        score = np.where(nz, np.inf, corr)
        ws = np.sort(full[np.argsort(-score, kind="stable")[:size]])
        hist = np.empty((_K + 1, ws.size * B.shape[1]))
        hist[0] = B[ws].ravel()
        inner = 0
        cyc = 0
        while it < max_iter:
            _sweep_np(X, R, B, nrm, nlam, ws)
            it += 1
            inner += 1
            cyc += 1
            hist[cyc] = B[ws].ravel()
            if cyc == _K:
                _anderson_np(X, Y, B, R, lam, ws, hist)
                hist[0] = B[ws].ravel()
                cyc = 0
            if track:
                history[it - 1] = _objective_np(R, B, lam, n)
            if inner % check_every == 0:
                g, _ = _gap_np(X, Y, B, R, lam, ws)
                if g <= 0.5 * tol_abs:
                    break
    return it, gap, history[:it]


def lasso_cd_np(X, y, beta, lam, max_iter, tol_abs, check_every, skip, track):
    B = beta.reshape(-1, 1)
    return mtl_bcd_np(X, y.reshape(-1, 1), B, lam, max_iter, tol_abs, check_every, skip, track)


# --------------------------------------------------------------------------
# special functions (plain python, compiled by numba when available)
# --------------------------------------------------------------------------

_FPMIN = 1e-300
_EPS = 1e-15
_MAXIT = 200000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta, modified Lentz."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    return h


def _stirling_tail(x):
    """``lgamma(x) - [(x - 0.5) log x - x + 0.5 log(2 pi)]`` for x >= 10."""
    x2 = x * x
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0
            - 1.0 / (1188.0 * x2)) / x2) / x2) / x2) / x


def _lbeta(a, b):
    """``log B(a, b)`` without cancellation when an argument is large."""
    small = min(a, b)
    big = max(a, b)
    if big < 10.0:
        return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    tot = big + small
    corr = _stirling_tail(big) - _stirling_tail(tot)
    if small < 10.0:
        return (math.lgamma(small) - (big - 0.5) * math.log1p(small / big)
                - small * math.log(tot) + small + corr)
    return (0.5 * math.log(2.0 * math.pi) - (big - 0.5) * math.log1p(small / big)
            + (small - 0.5) * math.log(small / tot) - 0.5 * math.log(tot)
            + _stirling_tail(small) + corr)


def _betainc(a, b, x, xc):
    """Regularized incomplete beta ``I_x(a, b)``; ``xc`` must equal ``1 - x``.

    Passing the complement separately keeps ``log x`` accurate when x is
    within rounding of 1, which happens for Fisher tails at large dof.
    """
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    log_x = math.log1p(-xc) if xc < 0.5 else math.log(x)
    log_xc = math.log1p(-x) if x < 0.5 else math.log(xc)
    log_front = a * log_x + b * log_xc - _lbeta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, xc) / b


def _gammainc_upper(a, x):
    """Regularized upper incomplete gamma ``Q(a, x)``."""
    if x <= 0.0:
        return 1.0
    log_front = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        # series for P(a, x)
        ap = a
        total = 1.0 / a
        term = total
        for _ in range(_MAXIT):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        return 1.0 - total * math.exp(log_front)
    # continued fraction for Q(a, x), modified Lentz
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(log_front) * h


def _f_sf_array(x, d1, d2, out):
    for i in range(x.shape[0]):
        xi = x[i]
        if xi <= 0.0:
            out[i] = 1.0
        elif math.isinf(xi):
            out[i] = 0.0
        else:
            den = d2 + d1 * xi
            out[i] = _betainc(0.5 * d2, 0.5 * d1, d2 / den, d1 * xi / den)
    return out


def _chi2_sf_array(x, k, out):
    for i in range(x.shape[0]):
        xi = x[i]
        if xi <= 0.0:
            out[i] = 1.0
        elif math.isinf(xi):
            out[i] = 0.0
        else:
            out[i] = _gammainc_upper(0.5 * k, 0.5 * xi)
    return out


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

if USE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _gap_nb(X, Y, B, R, lam, cols, m, corr):
        n = X.shape[0]
        p, T = B.shape
        dual_norm = 0.0
        for a in range(m):
            j = cols[a]
            nn = 0.0
            for t in range(T):
                acc = 0.0
                for i in range(n):
                    acc += X[i, j] * R[i, t]
                nn += acc * acc
            nn = math.sqrt(nn)
            corr[a] = nn
            if nn > dual_norm:
                dual_norm = nn
        scale = 1.0 if dual_norm <= n * lam else n * lam / dual_norm
        rr = 0.0
        ry = 0.0
        for t in range(T):
            for i in range(n):
                rr += R[i, t] * R[i, t]
                ry += R[i, t] * Y[i, t]
        l21 = 0.0
        for j in range(p):
            bn = 0.0
            for t in range(T):
                bn += B[j, t] * B[j, t]
            l21 += math.sqrt(bn)
        primal = 0.5 * rr / n + lam * l21
        dual = (scale * ry - 0.5 * scale * scale * rr) / n
        return primal - dual

    @_jit
    def _sweep_nb(X, R, B, nrm, nlam, cols, m, rho):
        n = X.shape[0]
        T = B.shape[1]
        for a in range(m):
            j = cols[a]
            for t in range(T):
                acc = nrm[j] * B[j, t]
                for i in range(n):
                    acc += X[i, j] * R[i, t]
                rho[t] = acc
            norm_rho = 0.0
            for t in range(T):
                norm_rho += rho[t] * rho[t]
            norm_rho = math.sqrt(norm_rho)
            shrink = 0.0
            if norm_rho > nlam:
                shrink = (1.0 - nlam / norm_rho) / nrm[j]
            for t in range(T):
                diff = shrink * rho[t] - B[j, t]
                if diff != 0.0:
                    for i in range(n):
                        R[i, t] -= diff * X[i, j]
                    B[j, t] = shrink * rho[t]

    @_jit
    def _objective_nb(R, B, lam, n):
        rr = 0.0
        for t in range(R.shape[1]):
            for i in range(R.shape[0]):
                rr += R[i, t] * R[i, t]
        l21 = 0.0
        for j in range(B.shape[0]):
            bn = 0.0
            for t in range(B.shape[1]):
                bn += B[j, t] * B[j, t]
            l21 += math.sqrt(bn)
        return 0.5 * rr / n + lam * l21

    @_jit
    def _anderson_nb(X, Y, B, R, lam, active, m, hist):
        n = X.shape[0]
        T = B.shape[1]
        K = hist.shape[0] - 1
        U = np.empty((K, hist.shape[1]))
        for k in range(K):
            for q in range(hist.shape[1]):
                U[k, q] = hist[k + 1, q] - hist[k, q]
        C = U @ U.T
        scale = 0.0
        for k in range(K):
            scale += C[k, k]
        if not scale > 0.0:
            return False
        for k in range(K):
            for q in range(K):
                C[k, q] /= scale
            C[k, k] += 1e-10
        # Cholesky by hand: numba's LAPACK bindings are optional
        L = np.zeros((K, K))
        for k in range(K):
            d = C[k, k]
            for q in range(k):
                d -= L[k, q] * L[k, q]
            if not d > 0.0:
                return False
            L[k, k] = math.sqrt(d)
            for r in range(k + 1, K):
                v = C[r, k]
                for q in range(k):
                    v -= L[r, q] * L[k, q]
                L[r, k] = v / L[k, k]
        z = np.ones(K)
        for k in range(K):
            v = z[k]
            for q in range(k):
                v -= L[k, q] * z[q]
            z[k] = v / L[k, k]
        for k in range(K - 1, -1, -1):
            v = z[k]
            for q in range(k + 1, K):
                v -= L[q, k] * z[q]
            z[k] = v / L[k, k]
        tot = 0.0
        for k in range(K):
            tot += z[k]
        if not math.isfinite(tot) or tot == 0.0:
            return False
        Ba = np.zeros((m, T))
        for k in range(K):
            w = z[k] / tot
            for a in range(m):
                for t in range(T):
                    Ba[a, t] += w * hist[k + 1, a * T + t]
        Re = np.empty((T, n)).T
        for t in range(T):
            for i in range(n):
                Re[i, t] = Y[i, t]
            for a in range(m):
                b = Ba[a, t]
                if b != 0.0:
                    j = active[a]
                    for i in range(n):
                        Re[i, t] -= X[i, j] * b
        rr_new = 0.0
        for t in range(T):
            for i in range(n):
                rr_new += Re[i, t] * Re[i, t]
        l21_new = 0.0
        for a in range(m):
            bn = 0.0
            for t in range(T):
                bn += Ba[a, t] * Ba[a, t]
            l21_new += math.sqrt(bn)
        # rows outside the active set are zero during restricted sweeps
        new_obj = 0.5 * rr_new / n + lam * l21_new
        if new_obj < _objective_nb(R, B, lam, n):
            for a in range(m):
                for t in range(T):
                    B[active[a], t] = Ba[a, t]
            for t in range(T):
                for i in range(n):
                    R[i, t] = Re[i, t]
            return True
        return False

    @_jit
    def _store_nb(hist, k, B, active, m):
        T = B.shape[1]
        for a in range(m):
            for t in range(T):
                hist[k, a * T + t] = B[active[a], t]

    @_jit
    def mtl_bcd_nb(X, Y, B, lam, max_iter, tol_abs, check_every, skip, track):
        n, p = X.shape
        T = Y.shape[1]
        nrm = np.zeros(p)
        full = np.empty(p, dtype=np.int64)
        n_full = 0
        for j in range(p):
            acc = 0.0
            for i in range(n):
                acc += X[i, j] * X[i, j]
            nrm[j] = acc
            if acc > 0.0 and j != skip:
                full[n_full] = j
                n_full += 1
        R = np.empty((T, n)).T  # Fortran order
        for t in range(T):
            for i in range(n):
                R[i, t] = Y[i, t]
        for j in range(p):
            for t in range(T):
                b = B[j, t]
                if b != 0.0:
                    for i in range(n):
                        R[i, t] -= X[i, j] * b
        nlam = n * lam
        history = np.empty(max_iter if track else 0)
        rho = np.zeros(T)
        corr = np.zeros(p)
        score = np.zeros(n_full)
        ws = np.empty(p, dtype=np.int64)
        it = 0
        prev = 0
        while True:
            gap = _gap_nb(X, Y, B, R, lam, full, n_full, corr)
            if gap <= tol_abs or it >= max_iter:
                break
            nnz = 0
            for a in range(n_full):
                j = full[a]
                score[a] = corr[a]
                for t in range(T):
                    if B[j, t] != 0.0:
                        score[a] = np.inf
                        nnz += 1
                        break
            m = min(n_full, max(_WS_MIN, 2 * nnz, 2 * prev))
            prev = m
            order = np.argsort(-score, kind="mergesort")[:m]
            sel = np.sort(full[:n_full][order])
            for a in range(m):
                ws[a] = sel[a]
            hist = np.empty((_K + 1, m * T))
            _store_nb(hist, 0, B, ws, m)
            inner = 0
            cyc = 0
            while it < max_iter:
                _sweep_nb(X, R, B, nrm, nlam, ws, m, rho)
                it += 1
                inner += 1
                cyc += 1
                _store_nb(hist, cyc, B, ws, m)
                if cyc == _K:
                    _anderson_nb(X, Y, B, R, lam, ws, m, hist)
                    _store_nb(hist, 0, B, ws, m)
                    cyc = 0
                if track:
                    history[it - 1] = _objective_nb(R, B, lam, n)
                if inner % check_every == 0:
                    g = _gap_nb(X, Y, B, R, lam, ws, m, corr)
                    if g <= 0.5 * tol_abs:
                        break
        return it, gap, history[:it]

    @_jit
    def lasso_cd_nb(X, y, beta, lam, max_iter, tol_abs, check_every, skip, track):
        B = beta.reshape((-1, 1))
        Y = y.reshape((-1, 1))
        return mtl_bcd_nb(X, Y, B, lam, max_iter, tol_abs, check_every, skip, track)

    _betacf = _jit(_betacf)
    _stirling_tail = _jit(_stirling_tail)
    _lbeta = _jit(_lbeta)
    _betainc = _jit(_betainc)
    _gammainc_upper = _jit(_gammainc_upper)
    _f_sf_array = _jit(_f_sf_array)
    _chi2_sf_array = _jit(_chi2_sf_array)

    lasso_cd = lasso_cd_nb
    mtl_bcd = mtl_bcd_nb
else:
    lasso_cd = lasso_cd_np
    mtl_bcd = mtl_bcd_np


def f_sf(x, d1, d2):
    """Survival function of the Fisher ``F(d1, d2)`` distribution."""
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x.reshape(-1))
    out = _f_sf_array(flat, float(d1), float(d2), np.empty_like(flat))
    return out.reshape(x.shape) if x.ndim else float(out[0])


def chi2_sf(x, k):
    """Survival function of the chi-square distribution with ``k`` dof."""
    x = np.asarray(x, dtype=float)
    flat = np.ascontiguousarray(x.reshape(-1))
    out = _chi2_sf_array(flat, float(k), np.empty_like(flat))
    return out.reshape(x.shape) if x.ndim else float(out[0])


def betainc(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)`` for a scalar ``x``."""
    x = float(x)
    return float(_betainc(float(a), float(b), x, 1.0 - x))
