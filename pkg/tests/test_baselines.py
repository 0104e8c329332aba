import numpy as np
import pytest

from desparse.baselines import default_lambda, dspm, ridge_kernel, sloreta
from desparse.core import standardize


def test_identity_design():
    K = ridge_kernel(np.eye(6), 0.5).K
    np.testing.assert_allclose(K, np.eye(6) / 1.5, atol=1e-15)


def test_large_lambda_vanishes():
    X = np.random.default_rng(0).normal(size=(10, 30))
    K = ridge_kernel(X, 1e8).K
    assert np.linalg.norm(K) <= 1e-6 * np.linalg.norm(X)


def test_woodbury_primal_form():
    X = np.random.default_rng(1).normal(size=(10, 30))
    lam = 0.7
    primal = np.linalg.solve(X.T @ X + lam * np.eye(30), X.T)
    np.testing.assert_allclose(ridge_kernel(X, lam).K, primal, atol=1e-8)


def test_lambda_validation_and_default():
    X = standardize(np.random.default_rng(2).normal(size=(12, 40)))
    assert default_lambda(X) == pytest.approx(40 / 9)
    with pytest.raises(ValueError):
        ridge_kernel(X, 0.0)
    with pytest.raises(ValueError):
        dspm(X, np.zeros(12), sigma2=0)


@pytest.mark.parametrize("fn", [dspm, sloreta])
def test_zero_and_homogeneity(fn):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(12, 25))
    Y = rng.normal(size=(12, 3))
    assert not fn(X, np.zeros((12, 3)), 1.0).any()
    np.testing.assert_allclose(fn(X, 2 * Y, 1.0), 2 * fn(X, Y, 1.0), rtol=1e-13)
    rk = ridge_kernel(X, 1.0)
    np.testing.assert_array_equal(fn(X, Y, rk), fn(X, Y, 1.0))


def test_sloreta_dense_oracle():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(15, 40))
    Y = rng.normal(size=(15, 2))
    lam, s2 = 0.8, 1.7
    K = X.T @ np.linalg.inv(X @ X.T + lam * np.eye(15))
    W = K @ (s2 * np.eye(15) + X @ X.T) @ K.T
    ref = (K @ Y) / np.sqrt(np.diag(W))[:, None]
    np.testing.assert_allclose(sloreta(X, Y, lam, s2), ref, rtol=1e-8)
    ref_d = (K @ Y) / np.sqrt(s2 * np.diag(K @ K.T))[:, None]
    np.testing.assert_allclose(dspm(X, Y, lam, s2), ref_d, rtol=1e-8)


def test_dspm_null_calibration():
    rng = np.random.default_rng(5)
    X = standardize(rng.normal(size=(30, 50)))
    rk = ridge_kernel(X, 2.0)
    vals = [dspm(X, rng.normal(size=(30, 1)), rk, 1.0) for _ in range(100)]
    v = np.var(np.concatenate(vals))
    assert 0.8 <= v <= 1.2


def test_sloreta_peak_scale_invariant():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(20, 60))
    Y = rng.normal(size=(20, 1))
    a = np.argmax(np.abs(sloreta(X, Y, 1.0)))
    assert np.argmax(np.abs(sloreta(X, 37.0 * Y, 1.0))) == a
