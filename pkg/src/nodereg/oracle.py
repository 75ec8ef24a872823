"""Analytic reference quantities for graphical Nadaraya-Watson.

These are the population objects the Monte Carlo experiments are checked
against: local edge density ``c(x)``, expected degree ``d(x) = n c(x)``, the
smoothing operator ``S(f, x)``, the exact GNW mean, and the closed-form risk
bounds.  One-dimensional integrals use a fixed trapezoid grid; in higher
dimension they are Monte Carlo averages over the latent density.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    DensitySpec,
    LinkKernel,
    NoiseSpec,
    RegressionFunction,
    make_rng,
    pairwise_distances,
)

__all__ = [
    "IntegrationSpec",
    "BoundParams",
    "unit_ball_volume",
    "sqrt_density_integral",
    "local_edge_density",
    "expected_degree",
    "smoothing_operator",
    "bias_proxy",
    "gnw_expectation_oracle",
    "simulate_gnw_at_point",
    "variance_proxy_mc",
    "variance_upper_bound",
    "variance_lower_bound",
    "degree_lower_bound",
    "risk_bound_1",
    "risk_bound_2",
    "minimizer_bound_1",
    "enw_risk_bound",
    "window_count",
]


@dataclass(frozen=True)
class IntegrationSpec:
    method: str = "trapezoid"
    resolution: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("trapezoid", "monte-carlo"):
            raise ValueError(f"unknown integration method {self.method!r}")
        if self.resolution < 100:
            raise ValueError("integration resolution must be at least 100")


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class BoundParams:
    """Constants entering the GNW global risk bounds."""

    L: float = 1.0
    a: float = 1.0
    B: float = 1.0
    sigma2: float = 1.0
    M1: float = 1.0
    M2: float = 1.0
    p0: float = 1.0
    c0: float = 1.0
    d: int = 1
    b: float = 1.0
    S: float = 1.0
    n: int = 500
    alpha: float = 1.0
    r0: float = np.inf
    sqrt_p_integral: float = 1.0

    @property
    def v_d(self) -> float:
        return unit_ball_volume(self.d)

    def bound1_constants(self):
        C1 = 4 * self.L**2 * self.M2 ** (2 * self.a)
        C2 = (36 * self.B**2 + 8 * self.sigma2) / (self.p0 * self.c0 * self.v_d * self.M1**self.d)
        return C1, C2

    def bound2_constants(self):
        C1 = 4 * self.L**2 * self.M2 ** (2 * self.a) + (8 * self.B**2 + 2 * self.sigma2) * math.sqrt(
            self.S
        ) * self.M1 ** (self.b / 2) * self.sqrt_p_integral
        C2 = (36 * self.B**2 + 8 * self.sigma2) / (self.c0 * self.v_d * self.S * self.M1 ** (self.d + self.b))
        return C1, C2


def sqrt_density_integral(density: DensitySpec) -> float:
    """``int p(x)^(1/2) dx`` in closed form for the supported densities."""
    if density.kind == "uniform":
        return math.sqrt(density.volume)
    # each axis: (2 pi s^2)^(-1/4) * sqrt(4 pi s^2)
    return float(np.prod([(2 * math.pi * s * s) ** -0.25 * math.sqrt(4 * math.pi * s * s) for s in density.std]))


def _kernel_reach(link: LinkKernel) -> float:
    if link.profile == "box":
        return link.h_g
    if link.profile == "truncated-gaussian":
        return 2.0 * link.h_g
    # exp(-t^2) < 1e-20 beyond t = 7
    return 7.0 * link.h_g


def _weighted_integrals(x, f: Optional[RegressionFunction], link, density, integ):
    """Return ``(int k p, int f k p)`` around the point ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if density.dim != x.shape[0]:
        raise ValueError("point and density dimensions differ")
    if density.dim == 1 and integ.method == "trapezoid":
        reach = _kernel_reach(link)
        lo, hi = x[0] - reach, x[0] + reach
        if density.kind == "uniform":
            lo, hi = max(lo, density.low[0]), min(hi, density.high[0])
        else:
            lo = max(lo, density.mean[0] - 12 * density.std[0])
            hi = min(hi, density.mean[0] + 12 * density.std[0])
        if hi <= lo:
            return 0.0, 0.0
        z = np.linspace(lo, hi, integ.resolution)
        kp = link(np.abs(z - x[0])) * density.pdf(z)
        c = float(np.trapezoid(kp, z))
        s = float(np.trapezoid(f(z) * kp, z)) if f is not None else 0.0
        return c, s
    rng = make_rng(integ.seed)
    from .model import sample_positions

    z = sample_positions(density, integ.resolution, rng).positions
    k = link(np.sqrt(np.sum((z - x[:, None]) ** 2, axis=0)))
    c = float(k.mean())
    s = float((f(z) * k).mean()) if f is not None else 0.0
    return c, s


def local_edge_density(x, link: LinkKernel, density: DensitySpec, integ: IntegrationSpec = IntegrationSpec()) -> float:
    """``c(x) = int k(x, z) p(z) dz``.

    Box link on a 1-d uniform density is evaluated in closed form.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if link.profile == "box" and density.kind == "uniform" and density.dim == 1:
        lo = max(x[0] - link.h_g, density.low[0])
        hi = min(x[0] + link.h_g, density.high[0])
        return link.alpha * max(hi - lo, 0.0) / density.volume
    return _weighted_integrals(x, None, link, density, integ)[0]


def expected_degree(x, link, density, n: int, integ: IntegrationSpec = IntegrationSpec()) -> float:
    return n * local_edge_density(x, link, density, integ)


def _box_uniform_moment(f: RegressionFunction, x: float, link, density, integ) -> float:
    lo = max(x - link.h_g, density.low[0])
    hi = min(x + link.h_g, density.high[0])
    if hi <= lo:
        return 0.0
    if f.kind == "sine":
        w = 2 * f.m * math.pi
        integral = (math.cos(w * lo) - math.cos(w * hi)) / w
    elif f.kind == "constant":
        integral = f.c * (hi - lo)
    elif f.kind == "linear":
        integral = f.slope * (hi * hi - lo * lo) / 2 + f.intercept * (hi - lo)
    else:
        z = np.linspace(lo, hi, integ.resolution)
        integral = float(np.trapezoid(f(z), z))
    return link.alpha * integral / density.volume


def smoothing_operator(f: RegressionFunction, x, link, density, integ: IntegrationSpec = IntegrationSpec()) -> float:
    """Kernel-weighted population mean ``S(f, x)``; 0 when ``c(x) = 0``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if link.profile == "box" and density.kind == "uniform" and density.dim == 1:
        c = local_edge_density(x, link, density, integ)
        num = _box_uniform_moment(f, x[0], link, density, integ)
    else:
        c, num = _weighted_integrals(x, f, link, density, integ)
    if c <= 0:
        return 0.0
    return num / c


def bias_proxy(f, x, link, density, integ: IntegrationSpec = IntegrationSpec()) -> float:
    """``S(f, x) - f(x)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return smoothing_operator(f, x, link, density, integ) - float(f(x[:, None])[0])


def gnw_expectation_oracle(f, x, link, density, n: int, integ: IntegrationSpec = IntegrationSpec()) -> float:
    """Exact mean of GNW at ``x``: ``S(f, x) (1 - (1 - c(x))^n)``."""
    c = local_edge_density(x, link, density, integ)
    if c <= 0:
        return 0.0
    return smoothing_operator(f, x, link, density, integ) * (1.0 - (1.0 - c) ** n)


def simulate_gnw_at_point(
    f: RegressionFunction,
    x,
    link: LinkKernel,
    density: DensitySpec,
    noise: NoiseSpec,
    n: int,
    replicas: int,
    seed,
    batch: int = 20_000,
) -> np.ndarray:
    """GNW at a fixed regression point over fresh positions, edges and noise.

    Only the ``n`` edges incident to the regression node matter to GNW, so
    each replica draws ``n`` positions, ``n`` edge uniforms and ``n`` noise
    values.  Returns the ``replicas`` GNW values.
    """
    from .model import sample_positions

    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = make_rng(seed)
    out = np.empty(replicas)
    done = 0
    while done < replicas:
        m = min(batch, replicas - done)
        z = sample_positions(density, n * m, rng).positions
        dist = np.sqrt(np.sum((z - x[:, None]) ** 2, axis=0)).reshape(m, n)
        edges = rng.random((m, n)) <= link(dist)
        y = f(z).reshape(m, n) + noise.draw(rng, (m, n))
        deg = edges.sum(axis=1)
        tot = np.where(edges, y, 0.0).sum(axis=1)
        vals = np.zeros(m)
        np.divide(tot, deg, out=vals, where=deg > 0)
        out[done : done + m] = vals
        done += m
    return out


def variance_proxy_mc(
    f, x, link, density, noise: NoiseSpec, n: int, replicas: int, seed, integ: IntegrationSpec = IntegrationSpec()
):
    """Monte Carlo estimate of ``E[(GNW(x) - S(f, x))^2]`` with its standard error."""
    if replicas < 1000:
        raise ValueError("variance proxy needs at least 1000 replicas")
    s = smoothing_operator(f, x, link, density, integ)
    vals = simulate_gnw_at_point(f, x, link, density, noise, n, replicas, seed)
    sq = (vals - s) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(replicas))


def variance_upper_bound(B: float, sigma2: float, degree: float) -> float:
    """``(9 B^2 + 2 sigma^2) / d(x)``."""
    return (9 * B * B + 2 * sigma2) / degree


def variance_lower_bound(sigma0_sq: float, degree: float) -> float:
    """``sigma0^2 (1 - exp(-d(x)))^2 / d(x)``."""
    return sigma0_sq * (1 - math.exp(-degree)) ** 2 / degree


def degree_lower_bound(params: BoundParams, h_g: float, p0_x: float) -> float:
    """Lower bound ``c0 v_d M1^d n alpha h_g^d p0(x) / 2`` on ``d(x)``."""
    return params.c0 * params.v_d * params.M1**params.d * params.n * params.alpha * h_g**params.d * p0_x / 2


def risk_bound_1(h_g: float, params: BoundParams) -> float:
    """``C1 h^(2a) + C2 / (n alpha h^d)`` for densities bounded below."""
    if not params.M1 * h_g < params.r0:
        raise ValueError("risk bound 1 needs M1 * h_g < r0")
    C1, C2 = params.bound1_constants()
    return C1 * h_g ** (2 * params.a) + C2 / (params.n * params.alpha * h_g**params.d)


def risk_bound_2(h_g: float, params: BoundParams) -> float:
    """``C1 h^min(2a, b/2) + C2 / (n alpha h^(d+b))`` for Hölder densities."""
    if not h_g < min(params.r0 / params.M1, 1.0):
        raise ValueError("risk bound 2 needs h_g < min(r0 / M1, 1)")
    C1, C2 = params.bound2_constants()
    expo = min(2 * params.a, params.b / 2)
    return C1 * h_g**expo + C2 / (params.n * params.alpha * h_g ** (params.d + params.b))


def minimizer_bound_1(params: BoundParams) -> float:
    """Length-scale minimising the two-term bound of :func:`risk_bound_1`."""
    C1, C2 = params.bound1_constants()
    a, d = params.a, params.d
    return (C2 * d / (2 * a * C1 * params.n * params.alpha)) ** (1.0 / (2 * a + d))


def enw_risk_bound(tau: float, L: float, a: float, M1: float, M2: float, sigma2: float, count_in_window: int, d: int = 1) -> float:
    """``C1 tau^(2a) + 4 sigma^2 / (k0 n tau^d)`` with ``k0 n tau^d = M(tau)``."""
    if count_in_window <= 0:
        return np.inf
    C1 = 2 * L * L * (M1 / 2 + M2) ** (2 * a)
    return C1 * tau ** (2 * a) + 4 * sigma2 / count_in_window


def window_count(positions, query: int, tau: float, M1: float = 1.0) -> int:
    """Number of other points within ``M1 tau / 2`` of column ``query``."""
    pos = np.atleast_2d(np.asarray(getattr(positions, "positions", positions), dtype=float))
    count = pos.shape[1]
    if not -count <= query < count:
        raise IndexError(f"query {query} out of range")
    q = query % count
    diff = np.delete(pos, q, axis=1) - pos[:, q : q + 1]
    dist = np.sqrt(np.sum(diff * diff, axis=0))
    return int(np.count_nonzero(dist <= M1 * tau / 2))
