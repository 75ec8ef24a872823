"""Local-averaging node regression: NW, graphical NW, estimated-distance NW.

All estimators return 0 when the total averaging weight is zero, and the
:class:`Prediction` records whether that fallback was taken.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Graph, make_rng, pairwise_distances, profile_value

__all__ = [
    "AveragingKernel",
    "BandwidthGrid",
    "Prediction",
    "nw_predict",
    "gnw_predict",
    "enw_predict",
    "gnw_in_sample",
    "leave_self_out_predictions",
    "perturbed_nw_smooth",
    "smoothed_mse",
    "loocv_errors",
    "loocv_bandwidth",
    "optimal_bandwidth_rate",
]

_PHI_CONSTANTS = {
    "rectangular": (1.0, 1.0),
    "gaussian": (float(np.sqrt(np.log(2.0))), np.inf),
    "truncated-gaussian": (float(np.sqrt(np.log(2.0))), 2.0),
}


@dataclass(frozen=True)
class AveragingKernel:
    """User-side averaging profile ``phi`` with its box constants."""

    profile: str = "rectangular"

    def __post_init__(self):
        if self.profile not in _PHI_CONSTANTS:
            raise ValueError(f"unknown averaging profile {self.profile!r}")

    @property
    def M1(self) -> float:
        return _PHI_CONSTANTS[self.profile][0]

    @property
    def M2(self) -> float:
        return _PHI_CONSTANTS[self.profile][1]

    def __call__(self, t) -> np.ndarray:
        return profile_value(self.profile, t)


@dataclass(frozen=True)
class BandwidthGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.size == 0:
            raise ValueError("bandwidth grid is empty")
        if np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("bandwidth grid must be positive and strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def around(cls, center: float, span: float = 10.0, num: int = 50, log: bool = True) -> "BandwidthGrid":
        """``num`` points over ``[center / span, center * span]``."""
        lo, hi = center / span, center * span
        vals = np.geomspace(lo, hi, num) if log else np.linspace(lo, hi, num)
        return cls(vals)

    @classmethod
    def default(cls, num: int = 50) -> "BandwidthGrid":
        return cls(np.geomspace(1e-3, 1.0, num))

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True)
class Prediction:
    value: float
    denominator_positive: bool


def _labels(labels) -> np.ndarray:
    return np.asarray(getattr(labels, "values", labels), dtype=float).ravel()


def nw_predict(distances, labels, phi: AveragingKernel, tau: float) -> Prediction:
    """Nadaraya-Watson average of ``labels`` with weights ``phi(distances / tau)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    dist = np.asarray(getattr(distances, "values", distances), dtype=float).ravel()
    y = _labels(labels)
    if dist.shape != y.shape:
        raise ValueError(f"length mismatch: {dist.shape[0]} distances, {y.shape[0]} labels")
    w = phi(dist / tau)
    total = w.sum()
    if total > 0:
        # full-length sum so that 0/1 weights reproduce a plain neighbour mean bit for bit
        return Prediction(float(np.sum(w * y) / total), True)
    return Prediction(0.0, False)


def enw_predict(est_distances, labels, phi: AveragingKernel, tau: float) -> Prediction:
    """NW on estimated distances; identical to :func:`nw_predict` on the same vector."""
    return nw_predict(est_distances, labels, phi, tau)


def gnw_predict(graph: Graph, labels, node: Optional[int] = None) -> Prediction:
    """Mean label over the graph neighbours of ``node``.

    ``labels`` covers every node except ``node``, in node order.  ``node``
    defaults to the last node.
    """
    n_nodes = graph.n_nodes
    if node is None:
        node = n_nodes - 1
    if not 0 <= node < n_nodes:
        raise IndexError(f"node {node} out of range for {n_nodes} nodes")
    y = _labels(labels)
    if y.shape[0] != n_nodes - 1:
        raise ValueError(f"expected {n_nodes - 1} labels, got {y.shape[0]}")
    row = np.delete(graph.adjacency[node], node)
    deg = np.count_nonzero(row)
    if deg == 0:
        return Prediction(0.0, False)
    return Prediction(float(np.sum(np.where(row, y, 0.0)) / deg), True)


def gnw_in_sample(adjacency, labels) -> np.ndarray:
    """GNW prediction at every node from the labels of its neighbours."""
    adj = np.asarray(adjacency, dtype=float)
    y = _labels(labels)
    deg = adj.sum(axis=1)
    num = adj @ y
    out = np.zeros_like(num)
    np.divide(num, deg, out=out, where=deg > 0)
    return out


def _nw_rows(weights: np.ndarray, y: np.ndarray) -> np.ndarray:
    total = weights.sum(axis=1)
    num = weights @ y
    out = np.zeros_like(num)
    np.divide(num, total, out=out, where=total > 0)
    return out


def leave_self_out_predictions(dist_matrix, labels, phi: AveragingKernel, tau: float) -> np.ndarray:
    """NW prediction at each point from all the other points."""
    w = phi(np.asarray(dist_matrix, dtype=float) / tau)
    np.fill_diagonal(w, 0.0)
    return _nw_rows(w, _labels(labels))


def perturbed_nw_smooth(positions, labels, phi: AveragingKernel, tau: float, delta: float, seed) -> np.ndarray:
    """In-sample NW smoothing on jittered univariate positions.

    Every position is moved once by ``delta * u_i`` with ``u_i ~ U[-1, 1]``;
    each point is then smoothed over all points (itself included) using the
    jittered distances and the original labels.
    """
    x = np.asarray(positions, dtype=float)
    if x.ndim == 2:
        if x.shape[0] != 1:
            raise ValueError("perturbed smoothing needs univariate positions")
        x = x[0]
    if x.ndim != 1:
        raise ValueError("perturbed smoothing needs univariate positions")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    u = make_rng(seed).uniform(-1.0, 1.0, x.shape[0])
    return _smooth_jittered(x + delta * u, _labels(labels), phi, tau)


def _smooth_jittered(xp: np.ndarray, y: np.ndarray, phi: AveragingKernel, tau: float) -> np.ndarray:
    w = phi(np.abs(xp[:, None] - xp[None, :]) / tau)
    return _nw_rows(w, y)


def smoothed_mse(smoothed, f_values) -> float:
    a = np.asarray(smoothed, dtype=float).ravel()
    b = np.asarray(f_values, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return float(np.mean((a - b) ** 2))


def loocv_errors(positions, labels, phi: AveragingKernel, grid: BandwidthGrid) -> np.ndarray:
    """Leave-one-out squared error for every bandwidth in ``grid``.

    ``positions`` is either a 1-d vector or a ``(d, n)`` array.  Folds with an
    empty window predict 0.
    """
    y = _labels(labels)
    if y.shape[0] < 2:
        raise ValueError("need at least two points")
    dist = pairwise_distances(positions)
    if dist.shape[0] != y.shape[0]:
        raise ValueError("length mismatch")
    errs = np.empty(len(grid))
    for k, tau in enumerate(grid.values):
        pred = leave_self_out_predictions(dist, y, phi, tau)
        errs[k] = np.mean((pred - y) ** 2)
    return errs


def loocv_bandwidth(positions, labels, phi: AveragingKernel, grid: BandwidthGrid) -> float:
    """Grid bandwidth minimising the leave-one-out error; ties go to the smaller value."""
    if grid is None or len(grid) == 0:
        raise ValueError("empty bandwidth grid")
    errs = loocv_errors(positions, labels, phi, grid)
    best = errs.min()
    # floating-point round-off between equal-error bandwidths counts as a tie
    tied = np.flatnonzero(errs <= best + 1e-12 * max(best, 1.0) + 1e-300)
    return float(grid.values[tied[0]])


def optimal_bandwidth_rate(n: float, a: float = 1.0, d: int = 1, c: float = 1.0) -> float:
    """Bandwidth order ``c * n^(-1 / (2a + d))``."""
    if n < 1 or not 0 < a <= 1 or d < 1 or c <= 0:
        raise ValueError("need n >= 1, a in (0, 1], d >= 1, c > 0")
    return float(c * n ** (-1.0 / (2 * a + d)))
