import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from desparse.solvers import (CVConfig, LassoConfig, MaxIterExceeded, cross_validate,
                              fit_mtlasso_cv, kfold_indices, lambda_grid, lambda_max_lasso,
                              lambda_max_mtl, mtl_objective, solve_lasso, solve_mtlasso)

from oracles import fista_mtl, group_soft_threshold, mtl_dual_gap


def problem(seed, n=30, p=50, T=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    B = np.zeros((p, T))
    B[:4] = rng.normal(size=(4, T)) * 2
    Y = X @ B + rng.normal(size=(n, T))
    return X, Y


def test_lambda_max_gives_zero():
    X, Y = problem(0)
    lmax = lambda_max_mtl(X, Y)
    assert not np.any(solve_mtlasso(X, Y, LassoConfig(lam=lmax)).data)
    assert np.any(solve_mtlasso(X, Y, LassoConfig(lam=0.99 * lmax)).data)


def test_orthonormal_design_closed_form():
    rng = np.random.default_rng(1)
    n = 32
    Q, _ = np.linalg.qr(rng.normal(size=(n, 10)))
    X = Q * np.sqrt(n)  # X^T X / n = I
    Y = rng.normal(size=(n, 3))
    lam = 0.3
    ref = group_soft_threshold(X.T @ Y / n, lam)
    B = solve_mtlasso(X, Y, LassoConfig(lam=lam)).data
    np.testing.assert_allclose(B, ref, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.02, 0.9))
def test_matches_fista(seed, frac):
    X, Y = problem(seed, n=25, p=35, T=3)
    lam = frac * lambda_max_mtl(X, Y)
    coef = solve_mtlasso(X, Y, LassoConfig(lam=lam))
    ref = mtl_objective(X, Y, fista_mtl(X, Y, lam), lam)
    assert coef.info.converged
    assert coef.info.objective == pytest.approx(ref, rel=1e-8)


def test_block_kkt():
    X, Y = problem(3)
    n = X.shape[0]
    lam = 0.2 * lambda_max_mtl(X, Y)
    cfg = LassoConfig(lam=lam, tol=1e-12)
    B = solve_mtlasso(X, Y, cfg).data
    G = X.T @ (Y - X @ B) / n
    gn = np.linalg.norm(G, axis=1)
    assert np.all(gn <= lam * (1 + 1e-5))
    act = np.linalg.norm(B, axis=1) > 0
    assert act.any()
    direction = B[act] / np.linalg.norm(B[act], axis=1, keepdims=True)
    np.testing.assert_allclose(G[act], lam * direction, atol=1e-5 * lam)


def test_lasso_kkt_and_skip():
    X, Y = problem(4, T=1)
    y = Y[:, 0]
    n = X.shape[0]
    lam = 0.1 * lambda_max_lasso(X, y)
    beta = solve_lasso(X, y, LassoConfig(lam=lam, tol=1e-12), skip=2).data[:, 0]
    assert beta[2] == 0
    g = X.T @ (y - X @ beta) / n
    keep = np.arange(X.shape[1]) != 2
    assert np.all(np.abs(g[keep]) <= lam * (1 + 1e-6))
    act = beta != 0
    np.testing.assert_allclose(g[act], lam * np.sign(beta[act]), atol=1e-6 * lam)
    # equals a fit on the design without column 2
    ref = solve_lasso(np.delete(X, 2, axis=1), y, LassoConfig(lam=lam, tol=1e-12)).data[:, 0]
    np.testing.assert_allclose(np.delete(beta, 2), ref, atol=1e-8)


def test_lasso_equals_mtlasso_single_column():
    X, Y = problem(5, T=1)
    lam = 0.15 * lambda_max_mtl(X, Y)
    a = solve_lasso(X, Y[:, 0], LassoConfig(lam=lam)).data
    b = solve_mtlasso(X, Y, LassoConfig(lam=lam)).data
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_objective_monotone_per_sweep():
    X, Y = problem(6)
    coef = solve_mtlasso(X, Y, LassoConfig(lam=0.05 * lambda_max_mtl(X, Y)), track=True)
    h = coef.info.history
    assert h.size == coef.info.n_iter
    assert np.all(np.diff(h) <= 1e-13 * h[0])


def test_gap_reported_is_certificate():
    X, Y = problem(7)
    lam = 0.1 * lambda_max_mtl(X, Y)
    coef = solve_mtlasso(X, Y, LassoConfig(lam=lam))
    p0 = 0.5 * np.sum(Y * Y) / X.shape[0]
    assert coef.info.gap <= 1e-6 * p0
    # P - D cancels O(1) terms, so compare on the P(0) scale
    assert abs(mtl_dual_gap(X, Y, coef.data, lam) - coef.info.gap) <= 1e-12 * p0


def test_max_iter_warns():
    X, Y = problem(8)
    with pytest.warns(MaxIterExceeded):
        coef = solve_mtlasso(X, Y, LassoConfig(lam=0.01 * lambda_max_mtl(X, Y), max_iter=2))
    assert not coef.info.converged
    assert coef.info.n_iter == 2


def test_warm_start_same_solution():
    X, Y = problem(9)
    lam = 0.1 * lambda_max_mtl(X, Y)
    cold = solve_mtlasso(X, Y, LassoConfig(lam=lam, tol=1e-12)).data
    start = solve_mtlasso(X, Y, LassoConfig(lam=2 * lam)).data
    warm = solve_mtlasso(X, Y, LassoConfig(lam=lam, tol=1e-12), B0=start).data
    np.testing.assert_allclose(warm, cold, atol=1e-7)


def test_zero_response():
    X, _ = problem(10)
    coef = solve_mtlasso(X, np.zeros((X.shape[0], 2)), LassoConfig(lam=0.1))
    assert not coef.data.any() and coef.info.converged


@pytest.mark.parametrize("kw", [dict(lam=-1), dict(tol=0), dict(max_iter=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        LassoConfig(**kw)


def test_kfold_partition():
    folds = kfold_indices(23, 5, seed=3)
    allidx = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allidx, np.arange(23))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


def test_lambda_grid():
    g = lambda_grid(2.0, CVConfig())
    assert g.size == 15 and g[0] == 2.0
    assert g[-1] == pytest.approx(0.02)
    assert np.all(np.diff(np.log(g)) == pytest.approx(np.log(0.01) / 14))


def test_cross_validation_picks_grid_point():
    X, Y = problem(11, n=60)
    lam, path = cross_validate(X, Y, CVConfig(seed=1))
    assert lam in path[:, 0]
    assert path[np.argmin(path[:, 1]), 0] == lam
    coef, lam2, _ = fit_mtlasso_cv(X, Y, CVConfig(seed=1))
    assert lam2 == lam
    assert set(range(4)) <= set(coef.support.tolist())


_BACKEND_SCRIPT = """
import numpy as np
from desparse import _kernels
from desparse.solvers import solve_mtlasso, LassoConfig, lambda_max_mtl
rng = np.random.default_rng(0)
X = rng.normal(size=(30, 45)); Y = rng.normal(size=(30, 3))
c = solve_mtlasso(X, Y, LassoConfig(lam=0.1 * lambda_max_mtl(X, Y), tol=1e-12))
np.save({out!r}, c.data)
print(_kernels.BACKEND)
"""


def test_numpy_and_numba_paths_agree(tmp_path):
    outs = {}
    for flag in ("0", "1"):
        out = tmp_path / f"b{flag}.npy"
        env = dict(os.environ, DESPARSE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT.format(out=str(out))],
                             env=env, capture_output=True, text=True, check=True)
        outs[res.stdout.strip()] = np.load(out)
    assert "numpy" in outs
    if "numba" in outs:
        np.testing.assert_allclose(outs["numba"], outs["numpy"], atol=1e-9)
