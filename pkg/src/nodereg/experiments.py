"""Monte Carlo risk estimation and figure-reproduction protocols.

Every random draw comes from a generator seeded by
``SeedSequence(master, spawn_key=keys)`` where ``keys`` encodes the
protocol stage, grid index, replica index and connectivity attempt.  Results
therefore do not depend on evaluation order, and a rerun with the same
configuration is bit-identical.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .estimators import (
    AveragingKernel,
    BandwidthGrid,
    gnw_in_sample,
    leave_self_out_predictions,
    loocv_bandwidth,
    nw_predict,
    _smooth_jittered,
)
from .model import (
    DensitySpec,
    LinkKernel,
    NoiseSpec,
    RegressionFunction,
    make_rng,
    pairwise_distances,
    sample_graph,
    sample_positions,
)
from .recovery import (
    DisconnectedGraphError,
    SpectralConfig,
    align_1d,
    distance_error_delta,
    distances_from_positions,
    position_error_D,
    recover,
)

__all__ = [
    "ESTIMATORS",
    "SweepConfig",
    "RiskCurve",
    "derive_seed",
    "mc_pointwise_risk",
    "mc_global_risk",
    "run_perturbed_nw_experiment",
    "PerturbedNWResult",
    "run_recovery_error_curve",
    "run_bias_variance_sweep",
    "SweepResult",
    "failure_probability_estimate",
    "synthetic_enw_pointwise_risk",
]

ESTIMATORS = ("gnw", "nw", "enw-sp", "enw-spectral")

# stage tags used as the first spawn key
_CV, _SWEEP, _POINT, _GLOBAL, _PERTURB, _RECOVERY, _FAILURE, _SYNTH = range(8)


def derive_seed(master, *keys: int) -> np.random.SeedSequence:
    """Independent child seed for a tuple of non-negative integer keys."""
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in keys))


@dataclass(frozen=True)
class SweepConfig:
    """Parameters shared by the Monte Carlo protocols.

    ``n`` is the number of labelled nodes.  For pointwise and global risk a
    regression node is appended, so graphs have ``n + 1`` nodes; the sweep
    predicts every one of its ``n`` nodes from the others.
    """

    n: int = 500
    d: int = 1
    density: DensitySpec = field(default_factory=DensitySpec)
    link_profile: str = "gaussian"
    alpha: float = 1.0
    h_g: float = 0.1
    m: float = 1.0
    sigma2: float = 1.5
    num_mc: int = 20
    num_pts: int = 50
    seed: int = 0
    grid_kind: str = "lengthscale-sweep"
    log_grid: bool = True
    q: float = 0.9
    rho0: float = 0.01
    max_retries: int = 10
    fix_positions: bool = False
    phi: str = "rectangular"
    tau: Optional[float] = None
    cv_grid_size: int = 50

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.num_mc < 1:
            raise ValueError("num_mc must be >= 1")
        if self.num_pts < 2:
            raise ValueError("num_pts must be >= 2")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.grid_kind not in ("lengthscale-sweep", "bandwidth-sweep"):
            raise ValueError(f"unknown grid kind {self.grid_kind!r}")
        if self.density.dim != self.d:
            raise ValueError("density dimension does not match d")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("tau must be positive")
        # validate the derived objects eagerly
        self.link()
        self.spectral()
        AveragingKernel(self.phi)

    def link(self, h_g: Optional[float] = None) -> LinkKernel:
        return LinkKernel(self.link_profile, self.alpha, self.h_g if h_g is None else h_g)

    def spectral(self) -> SpectralConfig:
        return SpectralConfig(self.q, self.rho0)

    def regression(self) -> RegressionFunction:
        return RegressionFunction.sine(self.m)

    def noise(self) -> NoiseSpec:
        return NoiseSpec("gaussian", self.sigma2)

    @property
    def bandwidth(self) -> float:
        return self.h_g if self.tau is None else self.tau

    def to_dict(self) -> dict:
        out = asdict(self)
        out["density"] = {k: v for k, v in asdict(self.density).items()}
        return out


@dataclass
class RiskCurve:
    """Per-grid-point summary of one estimator; missing points are NaN."""

    estimator: str
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    num_replicas: np.ndarray
    num_retries: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        self.num_replicas = np.asarray(self.num_replicas, dtype=int)
        self.num_retries = np.asarray(self.num_retries, dtype=int)
        if np.any(self.stderr[np.isfinite(self.stderr)] < 0):
            raise ValueError("negative stderr")

    def at(self, index: int):
        return self.mean[index], self.stderr[index]


def _summary(values: Sequence[float]):
    """Mean and standard error; NaN when too few values."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.nan, np.nan
    if v.size == 1:
        return float(v[0]), np.nan
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def _curve(estimator, grid, per_point: List[List[float]], retries) -> RiskCurve:
    stats = [_summary(v) for v in per_point]
    return RiskCurve(
        estimator,
        grid,
        [s[0] for s in stats],
        [s[1] for s in stats],
        [len(v) for v in per_point],
        retries,
    )


def _check_tag(tag: str):
    if tag not in ESTIMATORS:
        raise ValueError(f"unknown estimator tag {tag!r}; expected one of {ESTIMATORS}")


def _recover_with_retries(positions, link, algorithm, cfg, spectral, seed_keys, dim=1):
    """Sample graphs on fixed positions until recovery succeeds.

    Returns ``(estimate, graph, retries)``; ``estimate`` is ``None`` when all
    ``1 + max_retries`` attempts hit a disconnected graph.
    """
    for attempt in range(cfg.max_retries + 1):
        graph = sample_graph(positions, link, derive_seed(cfg.seed, *seed_keys, attempt))
        try:
            return recover(graph, algorithm, spectral, dim), graph, attempt
        except DisconnectedGraphError:
            continue
    return None, None, cfg.max_retries


def _predict_query(tag, positions, y, cfg: SweepConfig, seed_keys, phi):
    """Prediction at the last column of ``positions`` for one (edges, noise) draw.

    Returns ``(value, retries)``; ``value`` is ``None`` after exhausted retries.
    """
    link = cfg.link()
    tau = cfg.bandwidth
    if tag == "gnw":
        graph = sample_graph(positions, link, derive_seed(cfg.seed, *seed_keys, 0))
        row = graph.adjacency[-1, :-1]
        deg = np.count_nonzero(row)
        return (float(y[row].sum() / deg) if deg else 0.0), 0
    if tag == "nw":
        dist = distances_from_positions(positions, -1)
        return nw_predict(dist, y, phi, tau).value, 0
    est, _, retries = _recover_with_retries(positions, link, tag[4:], cfg, cfg.spectral(), seed_keys, cfg.d)
    if est is None:
        return None, retries
    dist = distances_from_positions(est.positions, -1)
    return nw_predict(dist, y, phi, tau).value, retries


def mc_pointwise_risk(cfg: SweepConfig, tag: str, x, replicas: int, seed=None, positions=None):
    """Squared-error risk at a fixed regression point ``x``.

    The ``n`` labelled positions are drawn once (or taken from
    ``positions``); each replica draws fresh edges and noise.  Replicas whose
    recovery never produced a connected graph are skipped.

    Returns ``(mean, stderr)``.
    """
    _check_tag(tag)
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    seed = cfg.seed if seed is None else seed
    cfg = replace(cfg, seed=seed)
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(cfg.d, 1)
    if positions is None:
        positions = sample_positions(cfg.density, max(cfg.n, 2), derive_seed(seed, _POINT, 0)).positions[:, : cfg.n]
    pos = np.hstack([np.atleast_2d(positions), x])
    f, noise, phi = cfg.regression(), cfg.noise(), AveragingKernel(cfg.phi)
    fx = float(f(x)[0])
    errs = []
    for r in range(replicas):
        y = f(pos[:, :-1]) + noise.draw(make_rng(derive_seed(seed, _POINT, 1, r)), cfg.n)
        val, _ = _predict_query(tag, pos, y, cfg, (_POINT, 2, r), phi)
        if val is not None:
            errs.append((val - fx) ** 2)
    return _summary(errs)


def mc_global_risk(cfg: SweepConfig, tag: str, replicas: int, seed=None):
    """Risk averaged over fresh positions (regression node included), edges and noise."""
    _check_tag(tag)
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    seed = cfg.seed if seed is None else seed
    cfg = replace(cfg, seed=seed)
    f, noise, phi = cfg.regression(), cfg.noise(), AveragingKernel(cfg.phi)
    errs = []
    for r in range(replicas):
        pos = sample_positions(cfg.density, cfg.n + 1, derive_seed(seed, _GLOBAL, 0, r)).positions
        y = f(pos[:, :-1]) + noise.draw(make_rng(derive_seed(seed, _GLOBAL, 1, r)), cfg.n)
        val, _ = _predict_query(tag, pos, y, cfg, (_GLOBAL, 2, r), phi)
        if val is not None:
            errs.append((val - float(f(pos[:, -1:])[0])) ** 2)
    return _summary(errs)


@dataclass
class PerturbedNWResult:
    tau_star: float
    deltas: np.ndarray
    curves: List[RiskCurve]


def run_perturbed_nw_experiment(
    n: int = 500,
    m: float = 2.0,
    sigma2: float = 1.5,
    multiples: Sequence[float] = (0, 1, 2),
    taus=None,
    num_mc: int = 20,
    seed: int = 0,
    phi: str = "rectangular",
) -> PerturbedNWResult:
    """In-sample NW smoothing on jittered uniform design points.

    Labels are ``sin(2 m pi x) + eps``.  ``tau_star`` is the minimiser of the
    unperturbed curve; each curve ``k`` in ``multiples`` then jitters every
    point by ``k * tau_star * u`` with ``u ~ U[-1, 1]``.  Positions, labels
    and ``u`` are shared across curves within a replica.
    """
    if num_mc < 1:
        raise ValueError("num_mc must be >= 1")
    tau_grid = BandwidthGrid(np.geomspace(1e-3, 0.5, 50) if taus is None else taus)
    kern = AveragingKernel(phi)
    f = RegressionFunction.sine(m)
    noise = NoiseSpec("gaussian", sigma2)
    data = []
    for r in range(num_mc):
        x = make_rng(derive_seed(seed, _PERTURB, 0, r)).random(n)
        y = f(x) + noise.draw(make_rng(derive_seed(seed, _PERTURB, 1, r)), n)
        u = make_rng(derive_seed(seed, _PERTURB, 2, r)).uniform(-1.0, 1.0, n)
        data.append((x, y, u))

    def curve(delta):
        mse = np.empty((num_mc, len(tau_grid)))
        for r, (x, y, u) in enumerate(data):
            fx = f(x)
            xp = x + delta * u
            for k, tau in enumerate(tau_grid.values):
                mse[r, k] = np.mean((_smooth_jittered(xp, y, kern, tau) - fx) ** 2)
        return mse

    base = curve(0.0)
    tau_star = float(tau_grid.values[int(np.argmin(base.mean(axis=0)))])
    curves = []
    for k in multiples:
        mse = base if k == 0 else curve(k * tau_star)
        per_point = [list(mse[:, j]) for j in range(len(tau_grid))]
        curves.append(_curve(f"delta={k:g}*tau_star", tau_grid.values, per_point, np.zeros(len(tau_grid))))
    return PerturbedNWResult(tau_star, np.asarray(multiples, dtype=float) * tau_star, curves)


def _draw_design(cfg: SweepConfig, stage: int, gi: int, r: int):
    """Positions and noisy labels for one replica of a univariate protocol."""
    key = (stage, 0, 0, 0) if cfg.fix_positions else (stage, 0, gi, r)
    pos = sample_positions(cfg.density, cfg.n, derive_seed(cfg.seed, *key)).positions
    f = cfg.regression()
    y = f(pos) + cfg.noise().draw(make_rng(derive_seed(cfg.seed, stage, 1, gi, r)), cfg.n)
    return pos, y


def run_recovery_error_curve(cfg: SweepConfig, hg_grid, seed=None, algorithms=("sp", "spectral")) -> List[RiskCurve]:
    """Mean aligned position error ``D`` against the length-scale, per algorithm."""
    seed = cfg.seed if seed is None else seed
    cfg = replace(cfg, seed=seed)
    if cfg.d != 1:
        raise ValueError("recovery error curves are univariate")
    grid = np.asarray(hg_grid, dtype=float)
    spec = cfg.spectral()
    out = []
    for alg in algorithms:
        per_point, retries = [], []
        for gi, h in enumerate(grid):
            vals, tot = [], 0
            link = cfg.link(h)
            for r in range(cfg.num_mc):
                pos, _ = _draw_design(cfg, _RECOVERY, gi, r)
                est, _, k = _recover_with_retries(pos, link, alg, cfg, spec, (_RECOVERY, 2, gi, r), 1)
                tot += k
                if est is not None:
                    vals.append(position_error_D(align_1d(est, pos), pos))
            per_point.append(vals)
            retries.append(tot)
        out.append(_curve(alg, grid, per_point, retries))
    return out


@dataclass
class SweepResult:
    tau_cv: float
    curves: List[RiskCurve]
    config: SweepConfig


def _enw_in_sample_mse(est_positions, y, fx, phi, cfg: SweepConfig, tau: Optional[float]) -> float:
    if tau is None:
        tau = loocv_bandwidth(est_positions, y, phi, BandwidthGrid.default(cfg.cv_grid_size))
    pred = leave_self_out_predictions(pairwise_distances(est_positions), y, phi, tau)
    return float(np.mean((pred - fx) ** 2))


def run_bias_variance_sweep(cfg: SweepConfig) -> SweepResult:
    """GNW against shortest-path and spectral ENW across a grid around ``tau_CV``.

    ``tau_CV`` is the LOOCV bandwidth on one draw of true positions and
    labels.  For a length-scale sweep each grid value is used as ``h_g``; the
    ENW bandwidth is then picked by LOOCV on the recovered positions.  For a
    bandwidth sweep ``h_g`` stays at ``cfg.h_g`` and each grid value is the NW
    bandwidth, with NW on true positions reported in place of GNW.  The
    metric is the leave-self-out in-sample MSE against ``f``.
    """
    if cfg.d != 1:
        raise ValueError("the bias-variance sweep is univariate")
    phi = AveragingKernel(cfg.phi)
    f = cfg.regression()
    x_cv, y_cv = _draw_design(replace(cfg, fix_positions=True), _CV, 0, 0)
    tau_cv = loocv_bandwidth(x_cv, y_cv, phi, BandwidthGrid.default(cfg.cv_grid_size))
    lo, hi = 0.1 * tau_cv, 10.0 * tau_cv
    grid = np.geomspace(lo, hi, cfg.num_pts) if cfg.log_grid else np.linspace(lo, hi, cfg.num_pts)
    spec = cfg.spectral()
    lengthscale = cfg.grid_kind == "lengthscale-sweep"
    names = ("gnw" if lengthscale else "nw", "enw-sp", "enw-spectral")
    vals = {k: [[] for _ in grid] for k in names}
    retries = {k: np.zeros(len(grid), dtype=int) for k in names}
    for gi, p in enumerate(grid):
        link = cfg.link(p if lengthscale else None)
        tau = None if lengthscale else p
        for r in range(cfg.num_mc):
            pos, y = _draw_design(cfg, _SWEEP, gi, r)
            fx = f(pos)
            if lengthscale:
                graph = sample_graph(pos, link, derive_seed(cfg.seed, _SWEEP, 2, gi, r, 0))
                vals["gnw"][gi].append(float(np.mean((gnw_in_sample(graph.adjacency, y) - fx) ** 2)))
            else:
                pred = leave_self_out_predictions(pairwise_distances(pos), y, phi, p)
                vals["nw"][gi].append(float(np.mean((pred - fx) ** 2)))
            for alg in ("sp", "spectral"):
                est, _, k = _recover_with_retries(pos, link, alg, cfg, spec, (_SWEEP, 2, gi, r), 1)
                retries["enw-" + alg][gi] += k
                if est is not None:
                    vals["enw-" + alg][gi].append(_enw_in_sample_mse(est.positions, y, fx, phi, cfg, tau))
    curves = [_curve(k, grid, vals[k], retries[k]) for k in names]
    return SweepResult(float(tau_cv), curves, cfg)


def failure_probability_estimate(cfg: SweepConfig, algorithm: str, tau, replicas: int, seed=None, positions=None):
    """Fraction of graph draws whose distance error exceeds ``M1 tau / 2``.

    Positions are fixed across replicas; ``Delta`` is computed once per
    replica from the unaligned recovered distances to the last node, so the
    estimate is exactly non-increasing in ``tau``.  A replica whose graph is
    disconnected counts as a failure.  ``tau`` may be a scalar or an array.
    """
    if algorithm not in ("sp", "spectral"):
        raise ValueError(f"unknown recovery algorithm {algorithm!r}")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    seed = cfg.seed if seed is None else seed
    if positions is None:
        positions = sample_positions(cfg.density, cfg.n + 1, derive_seed(seed, _FAILURE, 0)).positions
    pos = np.atleast_2d(positions)
    true_dist = distances_from_positions(pos, -1)
    link, spec = cfg.link(), cfg.spectral()
    deltas = np.empty(replicas)
    for r in range(replicas):
        graph = sample_graph(pos, link, derive_seed(seed, _FAILURE, 1, r))
        try:
            est = recover(graph, algorithm, spec, pos.shape[0])
        except DisconnectedGraphError:
            deltas[r] = np.inf
            continue
        deltas[r] = distance_error_delta(distances_from_positions(est.positions, -1), true_dist)
    phi = AveragingKernel(cfg.phi)
    taus = np.asarray(tau, dtype=float)
    fail = deltas[None, :] > (phi.M1 * taus.reshape(-1, 1) / 2)
    prob = fail.mean(axis=1)
    se = np.sqrt(prob * (1 - prob) / replicas)
    if taus.ndim == 0:
        return float(prob[0]), float(se[0])
    return prob, se


def synthetic_enw_pointwise_risk(
    positions, f: RegressionFunction, noise: NoiseSpec, phi: AveragingKernel, tau: float, replicas: int, seed
):
    """ENW risk at the last column when distance errors never exceed ``M1 tau / 2``.

    Each replica perturbs the true distances by ``U[-M1 tau / 2, M1 tau / 2]``
    (clipped at zero, which keeps the error inside the window) and draws
    fresh label noise.  Returns ``(mean, stderr)``.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    true_dist = distances_from_positions(pos, -1).values
    fx = float(f(pos[:, -1:])[0])
    fvals = f(pos[:, :-1])
    rng = make_rng(derive_seed(seed, _SYNTH))
    half = phi.M1 * tau / 2
    errs = np.empty(replicas)
    for r in range(replicas):
        est = np.clip(true_dist + rng.uniform(-half, half, true_dist.shape[0]), 0.0, None)
        y = fvals + noise.draw(rng, fvals.shape[0])
        errs[r] = (nw_predict(est, y, phi, tau).value - fx) ** 2
    return _summary(errs)
