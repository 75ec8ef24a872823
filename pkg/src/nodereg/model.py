"""Latent position model: positions, radial link kernels, graphs and labels.

Positions are stored as a ``(d, count)`` array whose columns are nodes; the
regression node is always the last column.  Every sampler takes an explicit
seed and is a pure function of its inputs.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csgraph, csr_matrix

__all__ = [
    "DensitySpec",
    "LinkKernel",
    "LatentSample",
    "Graph",
    "RegressionFunction",
    "NoiseSpec",
    "LabelVector",
    "profile_value",
    "make_rng",
    "sample_positions",
    "kernel_eval",
    "sample_graph",
    "graph_from_edges",
    "sample_labels",
    "noisy_values",
    "empirical_degree",
    "is_connected",
    "bfs_hops",
]

LINK_PROFILES = ("gaussian", "box", "truncated-gaussian")

# (M1, M2) such that 1/2 1[t <= M1] <= K(t) <= 1[t <= M2]
_BOX_CONSTANTS = {
    "box": (1.0, 1.0),
    "truncated-gaussian": (float(np.sqrt(np.log(2.0))), 2.0),
    "gaussian": (float(np.sqrt(np.log(2.0))), np.inf),
}


def profile_value(profile: str, t) -> np.ndarray:
    """Evaluate a radial profile ``K(t)`` (or ``phi(t)``) elementwise, t >= 0."""
    t = np.asarray(t, dtype=float)
    if profile == "gaussian":
        return np.exp(-t * t)
    if profile in ("box", "rectangular"):
        return (t <= 1.0).astype(float)
    if profile == "truncated-gaussian":
        return np.where(t <= 2.0, np.exp(-t * t), 0.0)
    raise ValueError(f"unknown profile {profile!r}")


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class DensitySpec:
    """Density of the latent positions.

    ``kind="uniform"`` is the product of uniforms on ``[low_k, high_k]``;
    ``kind="gaussian"`` is an axis-aligned normal with ``mean``/``std``.
    ``p0``, ``b`` and ``S`` are only used by the bound evaluators.
    """

    kind: str = "uniform"
    low: tuple = (0.0,)
    high: tuple = (1.0,)
    mean: tuple = (0.0,)
    std: tuple = (1.0,)
    p0: Optional[float] = None
    b: Optional[float] = None
    S: Optional[float] = None

    def __post_init__(self):
        for name in ("low", "high", "mean", "std"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        if self.kind == "uniform":
            if len(self.low) != len(self.high) or not self.low:
                raise ValueError("uniform density needs matching non-empty low/high")
            if any(lo >= hi for lo, hi in zip(self.low, self.high)):
                raise ValueError("uniform box bounds need low < high")
        elif self.kind == "gaussian":
            if len(self.mean) != len(self.std) or not self.mean:
                raise ValueError("gaussian density needs matching non-empty mean/std")
            if any(s <= 0 for s in self.std):
                raise ValueError("gaussian std must be positive")
        else:
            raise ValueError(f"unsupported density kind {self.kind!r}")

    @classmethod
    def uniform(cls, low=0.0, high=1.0, **kw) -> "DensitySpec":
        return cls(kind="uniform", low=low, high=high, **kw)

    @classmethod
    def gaussian(cls, mean=0.0, std=1.0, **kw) -> "DensitySpec":
        return cls(kind="gaussian", mean=mean, std=std, **kw)

    @property
    def dim(self) -> int:
        return len(self.low) if self.kind == "uniform" else len(self.mean)

    @property
    def volume(self) -> float:
        """Lebesgue measure of the support (inf for gaussian)."""
        if self.kind == "uniform":
            return float(np.prod(np.subtract(self.high, self.low)))
        return np.inf

    def pdf(self, z) -> np.ndarray:
        """Density at the columns of ``z`` (shape ``(d, m)``, or ``(m,)`` when d = 1)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.kind == "uniform":
            lo = np.asarray(self.low)[:, None]
            hi = np.asarray(self.high)[:, None]
            inside = np.all((z >= lo) & (z <= hi), axis=0)
            return inside / self.volume
        mu = np.asarray(self.mean)[:, None]
        sd = np.asarray(self.std)[:, None]
        dens = np.exp(-0.5 * ((z - mu) / sd) ** 2) / (np.sqrt(2 * np.pi) * sd)
        return np.prod(dens, axis=0)

    def contains(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if self.kind == "gaussian":
            return np.ones(z.shape[1], dtype=bool)
        lo = np.asarray(self.low)[:, None]
        hi = np.asarray(self.high)[:, None]
        return np.all((z >= lo) & (z <= hi), axis=0)


@dataclass(frozen=True)
class LinkKernel:
    """Radial link ``k(x, z) = alpha * K(||x - z|| / h_g)``.

    ``alpha = 0`` is accepted so that degenerate empty graphs can be built in
    tests; the model itself assumes ``0 < alpha <= 1``.
    """

    profile: str = "gaussian"
    alpha: float = 1.0
    h_g: float = 0.1

    def __post_init__(self):
        if self.profile not in LINK_PROFILES:
            raise ValueError(f"unknown link profile {self.profile!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.h_g > 0:
            raise ValueError("h_g must be positive")

    @property
    def M1(self) -> float:
        return _BOX_CONSTANTS[self.profile][0]

    @property
    def M2(self) -> float:
        return _BOX_CONSTANTS[self.profile][1]

    def K(self, t) -> np.ndarray:
        return profile_value(self.profile, t)

    def __call__(self, dist) -> np.ndarray:
        return self.alpha * self.K(np.asarray(dist, dtype=float) / self.h_g)


@dataclass(frozen=True)
class LatentSample:
    positions: np.ndarray
    density: DensitySpec
    seed: object = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.shape[1] < 2:
            raise ValueError("a latent sample needs at least two nodes")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        """Number of labelled nodes (all columns except the regression node)."""
        return self.positions.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.positions.shape[0]

    @property
    def query(self) -> np.ndarray:
        return self.positions[:, -1]


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph as a symmetric boolean adjacency matrix."""

    adjacency: np.ndarray
    seed: object = None

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("adjacency must have an empty diagonal")
        adj = adj.copy()
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> np.ndarray:
        """``(m, 2)`` array of edges ``(i, j)`` with ``i < j`` in row-major order."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return np.column_stack([i, j])


@dataclass(frozen=True)
class RegressionFunction:
    """Regression function on the latent space with its Hölder data.

    Only the first coordinate is used by ``sine``, ``linear`` and ``table``.
    """

    kind: str = "sine"
    m: float = 1.0
    c: float = 0.0
    slope: float = 1.0
    intercept: float = 0.0
    table_x: tuple = ()
    table_y: tuple = ()
    a: float = 1.0
    L: float = field(default=None)
    B: float = field(default=None)

    def __post_init__(self):
        if self.kind not in ("sine", "constant", "linear", "table"):
            raise ValueError(f"unknown regression kind {self.kind!r}")
        if not 0 < self.a <= 1:
            raise ValueError("Hölder exponent must lie in (0, 1]")
        if self.kind == "table":
            tx = tuple(float(v) for v in self.table_x)
            ty = tuple(float(v) for v in self.table_y)
            if len(tx) < 2 or len(tx) != len(ty) or np.any(np.diff(tx) <= 0):
                raise ValueError("table needs >= 2 strictly increasing abscissae")
            object.__setattr__(self, "table_x", tx)
            object.__setattr__(self, "table_y", ty)
        L, B = self._default_constants()
        if self.L is None:
            object.__setattr__(self, "L", L)
        if self.B is None:
            object.__setattr__(self, "B", B)

    def _default_constants(self):
        if self.kind == "sine":
            return 2 * self.m * np.pi, 1.0
        if self.kind == "constant":
            # any positive L works for a constant
            return 1.0, abs(self.c)
        if self.kind == "linear":
            # sup bound on [0, 1]
            return abs(self.slope), max(abs(self.intercept), abs(self.intercept + self.slope))
        slopes = np.abs(np.diff(self.table_y) / np.diff(self.table_x))
        return float(slopes.max()), float(np.max(np.abs(self.table_y)))

    @classmethod
    def sine(cls, m: float = 1.0) -> "RegressionFunction":
        return cls(kind="sine", m=m)

    @classmethod
    def constant(cls, c: float) -> "RegressionFunction":
        return cls(kind="constant", c=c)

    @classmethod
    def linear(cls, slope: float = 1.0, intercept: float = 0.0, **kw) -> "RegressionFunction":
        return cls(kind="linear", slope=slope, intercept=intercept, **kw)

    @classmethod
    def table(cls, xs: Sequence[float], ys: Sequence[float]) -> "RegressionFunction":
        return cls(kind="table", table_x=tuple(xs), table_y=tuple(ys))

    def __call__(self, x) -> np.ndarray:
        """Evaluate on the columns of ``x`` (``(d, m)``) or on a 1-d vector of scalars."""
        x = np.asarray(x, dtype=float)
        t = x[0] if x.ndim == 2 else x
        if self.kind == "sine":
            return np.sin(2 * self.m * np.pi * t)
        if self.kind == "constant":
            return np.full(np.shape(t), float(self.c))
        if self.kind == "linear":
            return self.slope * t + self.intercept
        return np.interp(t, self.table_x, self.table_y)


@dataclass(frozen=True)
class NoiseSpec:
    distribution: str = "gaussian"
    variance: float = 0.0

    def __post_init__(self):
        if self.distribution not in ("gaussian", "none"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")
        if not (self.variance >= 0 and np.isfinite(self.variance)):
            raise ValueError("noise variance must be finite and >= 0")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.distribution == "none" or self.variance == 0:
            return np.zeros(size)
        return rng.normal(0.0, np.sqrt(self.variance), size)


@dataclass(frozen=True)
class LabelVector:
    values: np.ndarray
    f: Optional[RegressionFunction] = None
    noise: Optional[NoiseSpec] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


def sample_positions(density: DensitySpec, count: int, seed) -> LatentSample:
    """Draw ``count`` i.i.d. latent positions; the last one is the regression node."""
    if count < 2:
        raise ValueError("count must be at least 2")
    rng = make_rng(seed)
    d = density.dim
    if density.kind == "uniform":
        lo = np.asarray(density.low)[:, None]
        hi = np.asarray(density.high)[:, None]
        pos = lo + (hi - lo) * rng.random((d, count))
    elif density.kind == "gaussian":
        pos = np.asarray(density.mean)[:, None] + np.asarray(density.std)[:, None] * rng.standard_normal((d, count))
    else:  # pragma: no cover - rejected by DensitySpec
        raise ValueError(f"unsupported density kind {density.kind!r}")
    return LatentSample(pos, density, seed)


def kernel_eval(link: LinkKernel, dist) -> np.ndarray:
    """Edge probability ``alpha * K(dist / h_g)``."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ValueError("distances must be non-negative")
    out = link(dist)
    return float(out) if out.ndim == 0 else out


def pairwise_distances(positions) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if pos.shape[0] == 1:
        return np.abs(pos[0][:, None] - pos[0][None, :])
    diff = pos[:, :, None] - pos[:, None, :]
    return np.sqrt(np.einsum("kij,kij->ij", diff, diff))


def sample_graph(sample, link: LinkKernel, seed) -> Graph:
    """Sample ``a_ij = 1[U_ij <= k(x_i, x_j)]`` with one uniform per unordered pair.

    Uniforms are consumed in canonical ``i < j`` row-major order, so the
    graph depends only on the positions, the link and the seed.
    """
    pos = sample.positions if isinstance(sample, LatentSample) else np.atleast_2d(sample)
    count = pos.shape[1]
    rng = make_rng(seed)
    iu, ju = np.triu_indices(count, 1)
    u = rng.random(iu.shape[0])
    prob = link(pairwise_distances(pos)[iu, ju])
    keep = u <= prob
    adj = np.zeros((count, count), dtype=bool)
    adj[iu[keep], ju[keep]] = True
    adj |= adj.T
    return Graph(adj, seed)


def graph_from_edges(n_nodes: int, edges, seed=None) -> Graph:
    adj = np.zeros((n_nodes, n_nodes), dtype=bool)
    for i, j in edges:
        if i == j:
            continue
        adj[i, j] = adj[j, i] = True
    return Graph(adj, seed)


def noisy_values(f: RegressionFunction, positions, noise: NoiseSpec, rng) -> np.ndarray:
    pos = np.atleast_2d(positions)
    return f(pos) + noise.draw(make_rng(rng), pos.shape[1])


def sample_labels(sample: LatentSample, f: RegressionFunction, noise: NoiseSpec, seed) -> LabelVector:
    """Labels ``y_i = f(x_i) + eps_i`` for every node except the regression node."""
    values = noisy_values(f, sample.positions[:, :-1], noise, seed)
    return LabelVector(values, f, noise)


def empirical_degree(graph: Graph, node: int) -> int:
    if not 0 <= node < graph.n_nodes:
        raise IndexError(f"node {node} out of range for {graph.n_nodes} nodes")
    return int(np.count_nonzero(graph.adjacency[node]))


def bfs_hops(adjacency: np.ndarray, source: int) -> np.ndarray:
    """Hop counts from ``source`` by breadth-first search (inf when unreachable)."""
    n = adjacency.shape[0]
    hops = np.full(n, np.inf)
    hops[source] = 0
    queue = deque([source])
    nbrs = [np.flatnonzero(row) for row in adjacency]
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if hops[v] == np.inf:
                hops[v] = hops[u] + 1
                queue.append(v)
    return hops


def is_connected(graph: Graph) -> bool:
    if graph.n_nodes <= 1:
        return True
    ncomp = csgraph.connected_components(csr_matrix(graph.adjacency), directed=False, return_labels=False)
    return ncomp == 1
