"""Configuration-driven experiment runner.

``desparse infer``    simulate one data set, run one method, write per-feature results.
``desparse campaign`` repeat simulate + infer and write error-control summaries.

See ``configs/experiment.ini`` for an annotated configuration.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__, _kernels
from .baselines import default_lambda, dspm, ridge_kernel, sloreta
from .cluster import cd_mtlasso
from .desparsify import InferenceConfig, NodewiseConfig, d_mtlasso, nodewise_scores
from .ensemble import EnsembleConfig, ecd_mtlasso
from .io import read_csv, read_json, write_csv, write_json, write_matrix
from .metrics import (SupportSpec, delta_fwer, delta_precision_recall, interpolated_precision,
                      ple, spatial_dispersion)
from .sim import SimConfig, make_gain, make_geometry, simulate
from .solvers import CVConfig, LassoConfig

METHODS = ("d-mtlasso", "cd-mtlasso", "ecd-mtlasso", "d-lasso", "sloreta", "dspm")
RECALL_GRID = np.round(np.linspace(0.05, 1.0, 20), 10)


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "d-mtlasso"
    sim: SimConfig = SimConfig()
    C: int = 40
    ensemble: EnsembleConfig = EnsembleConfig(B=25)
    nodewise: NodewiseConfig = NodewiseConfig()
    cv: CVConfig = CVConfig()
    solver: LassoConfig = LassoConfig()
    lam: float | None = None
    sigma2: float | None = None
    noise_model: str = "ar1"
    n_repetitions: int = 100
    alpha: float = 0.05
    delta_list: tuple = (0.0, 10.0, 20.0, 40.0)
    output: str = "results"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.method in ("cd-mtlasso", "ecd-mtlasso") and not self.C >= 1:
            raise ValueError("C must be >= 1 for clustered methods")
        if self.n_repetitions < 1:
            raise ValueError("n_repetitions must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        # the experiment seed drives the simulation
        object.__setattr__(self, "sim", self.sim.replace(seed=self.seed))

    def inference(self) -> InferenceConfig:
        return InferenceConfig(cv=self.cv, nodewise=self.nodewise, solver=self.solver,
                               lam=self.lam, noise_model=self.noise_model)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["delta_list"] = list(self.delta_list)
        return d


# -- config parsing ---------------------------------------------------------

_SECTIONS = {
    "experiment": {"method": str, "n_repetitions": int, "alpha": float,
                   "delta_list": "floats", "output": str, "seed": int},
    "method": {"C": int, "lam": "optfloat", "sigma2": "optfloat", "noise_model": str},
    "sim": {f.name: f.type for f in dataclasses.fields(SimConfig) if f.name != "seed"},
    "ensemble": {"B": int, "subsample_fraction": float, "gamma_min": float, "seed": int},
    "nodewise": {"c": float},
    "cv": {"n_lambdas": int, "lambda_min_ratio": float, "n_folds": int, "seed": int},
    "solver": {"max_iter": int, "tol": float, "check_every": int},
}


def _convert(kind, raw: str):
    raw = raw.strip()
    if kind in ("optfloat", "float | None") or kind == "int | None":
        if raw.lower() in ("", "none"):
            return None
        return int(raw) if kind == "int | None" else float(raw)
    if kind == "floats":
        return tuple(float(v) for v in raw.replace(",", " ").split())
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw


def _from_sections(sections: dict) -> ExperimentConfig:
    unknown = set(sections) - set(_SECTIONS) - {"DEFAULT"}
    if unknown:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    vals = {}
    for name, spec in _SECTIONS.items():
        got = dict(sections.get(name, {}))
        bad = set(got) - set(spec)
        if bad:
            raise ValueError(f"unknown key(s) in [{name}]: {', '.join(sorted(bad))}")
        vals[name] = {k: _convert(spec[k], v) if isinstance(v, str) else v
                      for k, v in got.items()}
    exp = dict(vals["experiment"])
    exp.update(vals["method"])
    if "delta_list" in exp:
        exp["delta_list"] = tuple(exp["delta_list"])
    return ExperimentConfig(
        sim=SimConfig(**vals["sim"]),
        ensemble=EnsembleConfig(**{"B": 25, **vals["ensemble"]}),
        nodewise=NodewiseConfig(**vals["nodewise"]),
        cv=CVConfig(**vals["cv"]),
        solver=LassoConfig(**vals["solver"]),
        **exp)


def load_config(path) -> ExperimentConfig:
    """Read an INI file, or the ``config`` block of a previously written manifest."""
    path = Path(path)
    if path.suffix == ".json":
        return config_from_dict(read_json(path)["config"])
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    return _from_sections({s: dict(parser[s]) for s in parser.sections()})


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    sim = {k: v for k, v in d.pop("sim").items() if k != "seed"}
    sections = {
        "sim": sim, "ensemble": d.pop("ensemble"),
        "nodewise": {"c": d.pop("nodewise")["c"]},
        "cv": d.pop("cv"),
        "solver": {k: v for k, v in d.pop("solver").items() if k != "lam"},
        "method": {k: d.pop(k) for k in ("C", "lam", "sigma2", "noise_model")},
    }
    sections["experiment"] = d
    sections["nodewise"]["c"] = float(sections["nodewise"]["c"])
    return _from_sections(sections)


def resolve_threads(arg: int | None) -> int:
    if arg is None:
        env = os.environ.get("DESPARSE_THREADS", "").strip()
        arg = int(env) if env else 1
    if arg < 0:
        raise ValueError("--threads must be >= 0")
    return (os.cpu_count() or 1) if arg == 0 else arg


# -- pipelines --------------------------------------------------------------

def run_method(cfg: ExperimentConfig, X, Y, G, *, scores=None, n_jobs: int = 1) -> dict:
    """Run ``cfg.method``; returns feature maps and solver diagnostics."""
    icfg = cfg.inference()
    Xa, Ya = X.data, Y.data
    p = Xa.shape[1]
    if cfg.method in ("sloreta", "dspm"):
        lam = cfg.lam if cfg.lam is not None else default_lambda(Xa)
        sigma2 = cfg.sigma2 if cfg.sigma2 is not None else cfg.sim.sigma ** 2
        rk = ridge_kernel(Xa, lam)
        fn = sloreta if cfg.method == "sloreta" else dspm
        m = fn(Xa, Ya, rk, sigma2)
        nan = np.full(p, np.nan)
        return {"beta": m, "stat": np.sqrt(np.mean(m * m, axis=1)), "pval": nan,
                "pval_corrected": nan, "diagnostics": {"lam": lam, "sigma2": sigma2}}
    if cfg.method == "d-mtlasso":
        res = d_mtlasso(Xa, Ya, icfg, scores=scores)
    elif cfg.method == "d-lasso":
        res = d_mtlasso(Xa, Ya[:, :1], icfg, scores=scores)
    elif cfg.method == "cd-mtlasso":
        res = cd_mtlasso(Xa, Ya, G, cfg.C, icfg)
    else:
        res = ecd_mtlasso(Xa, Ya, G, cfg.C, cfg.ensemble, icfg, n_jobs=n_jobs)
    diag = dict(res.diagnostics)
    diag.update(sigma2_hat=res.noise.sigma2, rho_hat=res.noise.rho, s_hat=res.s_hat,
                n_tests=res.n_tests)
    return {"beta": res.beta_debiased, "stat": res.stat, "pval": res.pval,
            "pval_corrected": res.pval_corrected, "diagnostics": diag}


def _scores(out, support, G, cfg: ExperimentConfig) -> dict:
    sc = {"ple_mm": ple(out["stat"], support, G),
          "sd_mm": spatial_dispersion(out["stat"], support, G)}
    if np.all(np.isfinite(out["pval_corrected"])):
        sc["delta_fwer_hit"] = {
            repr(float(d)): bool(delta_fwer([out["pval_corrected"]], SupportSpec(support, d),
                                            G, cfg.alpha)) for d in cfg.delta_list}
    return sc


def _manifest(cfg, extra) -> dict:
    conf = cfg.to_dict()
    del conf["output"]  # results are relocatable
    return {"version": __version__, "backend": _kernels.BACKEND, "config": conf, **extra}


def run_infer(cfg: ExperimentConfig, out_dir, *, threads: int = 1) -> dict:
    """Simulate, infer and score once; returns the manifest written."""
    out = Path(out_dir)
    t0 = time.perf_counter()
    sim = simulate(cfg.sim)
    X, Y, B, G = sim
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_method(cfg, X, Y, G, n_jobs=threads)
    support = B.support
    pos = G.positions
    beta = res["beta"]
    rows = [(j, pos[j, 0], pos[j, 1] if pos.shape[1] > 1 else 0.0,
             float(np.linalg.norm(beta[j])), res["stat"][j], res["pval"][j],
             res["pval_corrected"][j], int(j in set(support.tolist())))
            for j in range(G.p)]
    write_csv(out / "features.csv", ["index", "x_mm", "y_mm", "beta_norm", "stat", "pval",
                                     "pval_corrected", "true_active"], rows)
    write_matrix(out / "X.dspm", X.data)
    write_matrix(out / "Y.dspm", Y.data)
    write_matrix(out / "B_true.dspm", B.data)
    write_matrix(out / "beta.dspm", beta)
    manifest = _manifest(cfg, {
        "command": "infer", "n": X.n, "p": X.p, "T": Y.T,
        "support": support.tolist(), "diagnostics": res["diagnostics"],
        "scores": _scores(res, support, G, cfg),
        "files": ["features.csv", "X.dspm", "Y.dspm", "B_true.dspm", "beta.dspm"],
    })
    write_json(out / "manifest.json", manifest)
    write_json(out / "timing.json", {"wall_time_s": time.perf_counter() - t0})
    return manifest


def repetition_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep]).generate_state(1)[0])


def _one_rep(cfg: ExperimentConfig, rep: int, X, G, scores, run_dir: Path):
    stem = run_dir / f"rep_{rep:04d}"
    if stem.with_suffix(".json").exists():
        return
    scfg = cfg.sim.replace(seed=repetition_seed(cfg.seed, rep))
    sim = simulate(scfg, geometry=G, X=X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_method(cfg, sim.X, sim.Y, G, scores=scores)
    support = sim.B_true.support
    write_csv(stem.with_suffix(".csv"), ["index", "stat", "pval", "pval_corrected"],
              [(j, res["stat"][j], res["pval"][j], res["pval_corrected"][j])
               for j in range(G.p)])
    diag = res["diagnostics"]
    # the json marks completion, so it is written last
    write_json(stem.with_suffix(".json"), {
        "rep": rep, "seed": scfg.seed, "support": support.tolist(),
        "mean_cluster_diameter": diag.get("mean_cluster_diameter",
                                          float(np.mean(diag["cluster_diameters"]))
                                          if "cluster_diameters" in diag else None),
        "lam": diag.get("lam")})


def load_runs(run_dir, n_repetitions: int):
    """Per-run (stat, pval, pval_corrected, support) read back from disk."""
    runs = []
    for rep in range(n_repetitions):
        stem = Path(run_dir) / f"rep_{rep:04d}"
        meta = read_json(stem.with_suffix(".json"))
        _, rows = read_csv(stem.with_suffix(".csv"))
        arr = np.array([[float(v) for v in r[1:]] for r in rows])
        runs.append({"stat": arr[:, 0], "pval": arr[:, 1], "pval_corrected": arr[:, 2],
                     "support": np.asarray(meta["support"], dtype=np.int64), "meta": meta})
    return runs


def summarize_campaign(cfg: ExperimentConfig, runs, G) -> dict:
    """δ-FWER per δ, mean interpolated δ-precision on a recall grid, PLE and SD."""
    calibrated = all(np.all(np.isfinite(r["pval_corrected"])) for r in runs)
    fwer_rows, curve_rows, point_rows = [], [], []
    if calibrated:
        for d in cfg.delta_list:
            specs = [SupportSpec(r["support"], d) for r in runs]
            fwer = delta_fwer([r["pval_corrected"] for r in runs], specs, G, cfg.alpha)
            fwer_rows.append((d, cfg.alpha, fwer, len(runs)))
            interp = []
            for i, (r, s) in enumerate(zip(runs, specs)):
                curve = delta_precision_recall(r["pval_corrected"], s, G)
                point_rows += [(i, d, t, pr, rc) for t, pr, rc in curve]
                interp.append(interpolated_precision(curve, RECALL_GRID))
            mean = np.mean(interp, axis=0)
            curve_rows += [(d, rc, pr) for rc, pr in zip(RECALL_GRID, mean)]
    ple_rows = [(i, ple(r["stat"], r["support"], G), spatial_dispersion(r["stat"], r["support"], G))
                for i, r in enumerate(runs)]
    return {"fwer": fwer_rows, "curve": curve_rows, "points": point_rows, "ple_sd": ple_rows}


def run_campaign(cfg: ExperimentConfig, out_dir, *, threads: int = 1) -> dict:
    """Repeat simulate + infer; resumes from completed per-run files."""
    out = Path(out_dir)
    t0 = time.perf_counter()
    G = make_geometry(cfg.sim)
    gain_seed = cfg.sim.gain_seed if cfg.sim.gain_seed is not None else cfg.seed
    X = make_gain(G, cfg.sim.n_sensors, cfg.sim.gain_model, gain_seed,
                  width_mm=cfg.sim.width_mm, jitter=cfg.sim.jitter)
    scores = None
    if cfg.method in ("d-mtlasso", "d-lasso"):
        scores = nodewise_scores(X, cfg.nodewise, on_degenerate="exclude")
    run_dir = out / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    reps = range(cfg.n_repetitions)
    if threads == 1:
        for r in reps:
            _one_rep(cfg, r, X, G, scores, run_dir)
    else:
        Parallel(n_jobs=threads)(delayed(_one_rep)(cfg, r, X, G, scores, run_dir) for r in reps)
    runs = load_runs(run_dir, cfg.n_repetitions)
    summ = summarize_campaign(cfg, runs, G)
    files = ["ple_sd.csv"]
    write_csv(out / "ple_sd.csv", ["rep", "ple_mm", "sd_mm"], summ["ple_sd"])
    if summ["fwer"]:
        write_csv(out / "fwer.csv", ["delta_mm", "alpha", "fwer", "n_runs"], summ["fwer"])
        write_csv(out / "pr_curve.csv", ["delta_mm", "recall", "precision"], summ["curve"])
        write_csv(out / "pr_points.csv", ["rep", "delta_mm", "threshold", "precision", "recall"],
                  summ["points"])
        files += ["fwer.csv", "pr_curve.csv", "pr_points.csv"]
    diam = [r["meta"]["mean_cluster_diameter"] for r in runs]
    manifest = _manifest(cfg, {
        "command": "campaign", "gain_seed": gain_seed,
        "repetition_seeds": [r["meta"]["seed"] for r in runs],
        "mean_cluster_diameter": float(np.mean(diam)) if None not in diam else None,
        "files": files + ["runs/"],
    })
    write_json(out / "manifest.json", manifest)
    write_json(out / "timing.json", {"wall_time_s": time.perf_counter() - t0})
    return manifest


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="desparse", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, helptext in (("infer", "single simulate + infer run"),
                           ("campaign", "Monte Carlo campaign")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI file or a previous manifest.json")
        p.add_argument("--seed", type=int, help="override [experiment] seed")
        p.add_argument("--out-dir", help="override [experiment] output")
        p.add_argument("--threads", type=int,
                       help="worker count, 0 = all cores (default: $DESPARSE_THREADS or 1)")
        p.add_argument("--method", choices=METHODS, help="override [experiment] method")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.method is not None:
            over["method"] = args.method
        if args.out_dir is not None:
            over["output"] = args.out_dir
        cfg = dataclasses.replace(cfg, **over)
        threads = resolve_threads(args.threads)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"desparse: error: {exc}", file=sys.stderr)
        return 2
    runner = run_infer if args.command == "infer" else run_campaign
    manifest = runner(cfg, cfg.output, threads=threads)
    print(json.dumps({"command": args.command, "output": cfg.output,
                      "files": manifest["files"]}, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
