"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at
import time from ``DESPARSE_DISABLE_NUMBA``. Timings exclude a warm-up
call, so numba compilation is not counted.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time, warnings
import numpy as np
warnings.simplefilter("ignore")
from desparse import _kernels
from desparse.desparsify import fisher_sf, nodewise_scores
from desparse.sim import SimConfig, make_gain, make_geometry, simulate
from desparse.solvers import LassoConfig, lambda_max_mtl, solve_mtlasso

repeat, quick = int(sys.argv[1]), sys.argv[2] == "1"
cfg = SimConfig(rows=10, cols=10) if quick else SimConfig()
G = make_geometry(cfg)
X = make_gain(G, cfg.n_sensors, cfg.gain_model, 0)
Y = simulate(cfg, geometry=G, X=X).Y.data
lam = 0.05 * lambda_max_mtl(X, Y)
x = np.linspace(0.0, 10.0, 20000)

cases = {
    "mtlasso_solve": lambda: solve_mtlasso(X, Y, LassoConfig(lam=lam)),
    "nodewise_scores": lambda: nodewise_scores(X, on_degenerate="exclude"),
    "fisher_sf_20k": lambda: fisher_sf(x, 6, 90),
}
out = {"backend": _kernels.BACKEND, "p": G.p, "n": X.n}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps(out))
"""


def run(flag, repeat, quick):
    env = dict(os.environ, DESPARSE_DISABLE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat), "1" if quick else "0"],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="10x10 grid instead of 20x20")
    args = ap.parse_args(argv)
    nb = run("0", args.repeat, args.quick)
    npy = run("1", args.repeat, args.quick)
    print(f"design n={nb['n']} p={nb['p']}; best of {args.repeat}, seconds")
    print(f"{'case':<18}{nb['backend']:>10}{npy['backend']:>10}{'ratio':>9}")
    for case in ("mtlasso_solve", "nodewise_scores", "fisher_sf_20k"):
        print(f"{case:<18}{nb[case]:>10.4f}{npy[case]:>10.4f}{npy[case] / nb[case]:>8.1f}x")


if __name__ == "__main__":
    main()
