"""Synthetic geometries, gain matrices, sparse sources and AR(1) noise.

The Gaussian-kernel gain is a stand-in for a physical leadfield: sensors
are scattered over the source region and each column is a smooth bump,
which yields the strongly correlated neighbouring columns typical of
M/EEG forward models.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import CoefMatrix, DesignMatrix, Geometry, MultiResponse, ToeplitzAR1, standardize


@dataclass(frozen=True)
class SimConfig:
    geometry: str = "grid"          # "grid" or "chain"
    rows: int = 20
    cols: int = 20
    p: int = 20                     # chain length
    spacing_mm: float = 5.0
    n_sensors: int = 100
    gain_model: str = "gaussian_kernel"   # or "iid"
    width_mm: float = 15.0
    jitter: float = 0.01
    n_active_regions: int = 3
    region_radius_mm: float = 10.0
    amplitude: float = 1.0
    snr: float | None = None        # overrides amplitude when set
    rho: float = 0.3
    sigma: float = 1.0
    T: int = 6
    seed: int = 0
    gain_seed: int | None = None    # None: derived from seed

    def __post_init__(self):
        if self.geometry not in ("grid", "chain"):
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.gain_model not in ("gaussian_kernel", "iid"):
            raise ValueError(f"unknown gain_model {self.gain_model!r}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.sigma < 0 or self.spacing_mm <= 0 or self.width_mm <= 0:
            raise ValueError("sigma, spacing_mm and width_mm must be positive")
        if self.T < 1 or self.n_sensors < 2:
            raise ValueError("need T >= 1 and n_sensors >= 2")

    def replace(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def grid_geometry(rows: int, cols: int, spacing_mm: float = 1.0) -> Geometry:
    r, c = np.divmod(np.arange(rows * cols), cols)
    pos = np.column_stack([c * spacing_mm, r * spacing_mm]).astype(float)
    idx = np.arange(rows * cols).reshape(rows, cols)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    edges = np.vstack([horiz, vert])
    return Geometry(pos, edges, np.full(len(edges), float(spacing_mm)))


def chain_geometry(p: int, spacing_mm: float = 1.0) -> Geometry:
    pos = np.column_stack([np.arange(p) * spacing_mm, np.zeros(p)])
    edges = np.column_stack([np.arange(p - 1), np.arange(1, p)])
    return Geometry(pos, edges, np.full(p - 1, float(spacing_mm)))


def make_geometry(cfg: SimConfig) -> Geometry:
    if cfg.geometry == "grid":
        return grid_geometry(cfg.rows, cfg.cols, cfg.spacing_mm)
    return chain_geometry(cfg.p, cfg.spacing_mm)


def make_gain(G: Geometry, n: int, model: str = "gaussian_kernel", seed=0, *,
              width_mm: float = 15.0, jitter: float = 0.01) -> DesignMatrix:
    """Standardized ``n x p`` gain matrix.

    ``gaussian_kernel``: sensors uniform over the bounding box of the
    positions, ``X_ij = exp(-|s_i - x_j|^2 / (2 width^2)) + jitter * N(0, 1)``.
    ``iid``: standard normal entries.
    """
    rng = np.random.default_rng(seed)
    if model == "iid":
        return standardize(rng.standard_normal((n, G.p)))
    if model != "gaussian_kernel":
        raise ValueError(f"unknown gain model {model!r}")
    pos = G.positions
    lo, hi = pos.min(axis=0), pos.max(axis=0)
    sensors = lo + (hi - lo) * rng.random((n, pos.shape[1]))
    d2 = ((sensors[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1)
    X = np.exp(-d2 / (2.0 * width_mm**2)) + jitter * rng.standard_normal((n, G.p))
    return standardize(X)


def make_sources(G: Geometry, cfg: SimConfig, seed=0, *, max_tries: int = 1000) -> CoefMatrix:
    """Constant-amplitude blobs of features within ``region_radius_mm`` of random centers.

    Centers are drawn one at a time, uniformly among the features lying at
    least ``4 * region_radius_mm`` from the centers already chosen.
    """
    rng = np.random.default_rng(seed)
    D = G.distances()
    k = cfg.n_active_regions
    sep = 4.0 * cfg.region_radius_mm
    for _ in range(max_tries):
        centers: list[int] = []
        eligible = np.ones(G.p, dtype=bool)
        for _ in range(k):
            cand = np.flatnonzero(eligible)
            if cand.size == 0:
                break
            c = int(rng.choice(cand))
            centers.append(c)
            eligible &= D[c] >= max(sep, np.finfo(float).tiny)
        if len(centers) == k:
            break
    else:
        raise ValueError(f"cannot place {k} regions {sep} mm apart on this geometry")
    active = np.any(D[centers] <= cfg.region_radius_mm, axis=0)
    B = np.zeros((G.p, cfg.T))
    B[active] = cfg.amplitude
    return CoefMatrix(B)


def make_noise(n: int, T: int, noise, seed=0) -> np.ndarray:
    """Rows are independent stationary AR(1) sequences with covariance M.

    ``noise`` is a :class:`ToeplitzAR1` or a ``(sigma, rho)`` pair; the pair
    form allows ``sigma = 0``.
    """
    if isinstance(noise, ToeplitzAR1):
        sigma, rho = float(np.sqrt(noise.sigma2)), noise.rho
    else:
        sigma, rho = map(float, noise)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((n, T))
    E = np.empty((n, T))
    E[:, 0] = sigma * xi[:, 0]
    innov = sigma * np.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        E[:, t] = rho * E[:, t - 1] + innov * xi[:, t]
    return E


@dataclass(frozen=True)
class Simulation:
    X: DesignMatrix
    Y: MultiResponse
    B_true: CoefMatrix
    G: Geometry
    E: np.ndarray

    def __iter__(self):
        return iter((self.X, self.Y, self.B_true, self.G))


def simulate(cfg: SimConfig, *, geometry: Geometry | None = None,
             X: DesignMatrix | None = None) -> Simulation:
    """``Y = X B + E``; deterministic given ``cfg.seed`` (and ``cfg.gain_seed``).

    A precomputed ``geometry`` and design ``X`` can be passed to reuse them
    across repetitions.
    """
    ss = np.random.SeedSequence(cfg.seed)
    s_gain, s_src, s_noise = ss.spawn(3)
    G = geometry if geometry is not None else make_geometry(cfg)
    if X is None:
        gseed = s_gain if cfg.gain_seed is None else cfg.gain_seed
        X = make_gain(G, cfg.n_sensors, cfg.gain_model, gseed, width_mm=cfg.width_mm,
                      jitter=cfg.jitter)
    B = make_sources(G, cfg, s_src)
    E = make_noise(X.n, cfg.T, (cfg.sigma, cfg.rho), s_noise)
    signal = X.data @ B.data
    if cfg.snr is not None:
        sn, en = np.linalg.norm(signal), np.linalg.norm(E)
        if sn == 0 or en == 0:
            raise ValueError("snr requires nonzero signal and noise")
        factor = cfg.snr * en / sn
        B = CoefMatrix(B.data * factor)
        signal = signal * factor
    return Simulation(X=X, Y=MultiResponse(signal + E), B_true=B, G=G, E=E)
