import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from desparse import _kernels
from desparse.desparsify import chi2_sf, fisher_sf

from oracles import chi2_sf_mp, fisher_sf_mp


@pytest.mark.parametrize("d1,d2,x", [(1, 5, 0.5), (3, 40, 2.2), (20, 500, 1.1),
                                     (6, 94, 0.01), (6, 94, 12.0), (2, 7, 80.0)])
def test_fisher_sf_mpmath(d1, d2, x):
    assert abs(fisher_sf(x, d1, d2) - fisher_sf_mp(x, d1, d2)) <= 1e-12


@pytest.mark.parametrize("k,x", [(1, 0.3), (5, 4.0), (20, 30.0), (6, 1e-3), (3, 60.0)])
def test_chi2_sf_mpmath(k, x):
    assert abs(chi2_sf(x, k) - chi2_sf_mp(x, k)) <= 1e-12


def test_f_sf_boundaries():
    assert fisher_sf(0.0, 3, 10) == 1.0
    assert fisher_sf(-1.0, 3, 10) == 1.0
    assert fisher_sf(np.inf, 3, 10) == 0.0
    assert chi2_sf(0.0, 4) == 1.0


def test_vectorized_matches_scalar():
    x = np.linspace(0, 8, 33)
    v = fisher_sf(x, 4, 60)
    np.testing.assert_allclose(v, [fisher_sf(t, 4, 60) for t in x], rtol=0, atol=0)
    np.testing.assert_allclose(v, stats.f.sf(x, 4, 60), atol=1e-12)


def test_betainc_symmetry():
    for a, b, x in [(0.5, 2.5, 0.3), (10, 3, 0.9), (250, 2, 0.99)]:
        assert _kernels.betainc(a, b, x) + _kernels.betainc(b, a, 1 - x) == pytest.approx(1, abs=1e-13)


def test_f_to_chi2_large_dof():
    # the F(T, k) -> chi2_T / T limit is only 1e-6 tight for k around 1e8 when T = 20
    for T in (1, 5, 20):
        for x in (0.3, 1.0, 2.5):
            assert abs(fisher_sf(x, T, 1e8) - chi2_sf(T * x, T)) <= 1e-6


_SCRIPT = """
import numpy as np
from desparse import _kernels
x = np.linspace(0, 6, 25)
print(_kernels.BACKEND)
print(repr(_kernels.f_sf(x, 3, 50).tolist()))
"""


def test_backends_agree_on_special_functions():
    lines = {}
    for flag in ("0", "1"):
        env = dict(os.environ, DESPARSE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env,
                             capture_output=True, text=True, check=True).stdout.split("\n")
        lines[out[0]] = np.array(eval(out[1]))
    assert "numpy" in lines
    if "numba" in lines:
        np.testing.assert_allclose(lines["numba"], lines["numpy"], atol=1e-14)
