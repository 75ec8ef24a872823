"""Latent position recovery from an adjacency matrix.

Two recovery routes are provided:

* shortest paths: hop distances followed by classical MDS;
* spectral: truncate the adjacency spectrum to the eigenvalues that sit
  outside the noise bulk, threshold the low-rank matrix at ``q`` and run the
  shortest-path route on the thresholded graph.

Recovered coordinates are affinely normalised to unit range, since hop counts
only track latent distance up to an unknown length-scale.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph, csr_matrix

from .model import Graph, LatentSample, is_connected

__all__ = [
    "DisconnectedGraphError",
    "PositionEstimate",
    "DistanceEstimate",
    "SpectralConfig",
    "floyd_warshall",
    "classical_mds",
    "recover_sp",
    "spectral_rank",
    "denoise_adjacency",
    "threshold_adjacency",
    "recover_spectral",
    "recover",
    "align_1d",
    "distances_from_positions",
    "distance_error_delta",
    "position_error_D",
]


class DisconnectedGraphError(ValueError):
    """Raised when a recovery step needs a connected graph and did not get one."""

    def __init__(self, message: str, q: float | None = None):
        super().__init__(message)
        self.q = q


@dataclass(frozen=True)
class PositionEstimate:
    positions: np.ndarray
    algorithm: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if not np.all(np.isfinite(pos)):
            raise ValueError("position estimate has non-finite entries")
        object.__setattr__(self, "positions", pos)

    @property
    def dim(self) -> int:
        return self.positions.shape[0]

    @property
    def count(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class DistanceEstimate:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v < 0):
            raise ValueError("distances must be non-negative")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpectralConfig:
    q: float = 0.9
    rho0: float = 0.01

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.rho0 < 0:
            raise ValueError("rho0 must be >= 0")


def _adjacency(graph) -> np.ndarray:
    return graph.adjacency if isinstance(graph, Graph) else np.asarray(graph, dtype=bool)


def floyd_warshall(graph) -> np.ndarray:
    """All-pairs hop counts; ``inf`` between different components."""
    adj = _adjacency(graph)
    return csgraph.floyd_warshall(csr_matrix(adj), directed=False, unweighted=True)


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so that its first non-negligible entry is positive."""
    vecs = vecs.copy()
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            vecs[:, k] = -col
    return vecs


def classical_mds(dist, dim: int = 1) -> PositionEstimate:
    """Torgerson embedding of a finite symmetric distance matrix.

    Double-centres the squared distances, keeps the top ``dim`` eigenpairs
    and scales each eigenvector by the square root of its eigenvalue
    (negative eigenvalues contribute zero coordinates).
    """
    D = np.asarray(dist, dtype=float)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not np.all(np.isfinite(D)):
        raise ValueError("distance matrix has infinite entries; is the graph connected?")
    n = D.shape[0]
    B = -0.5 * D * D
    B = B - B.mean(axis=0, keepdims=True)
    B = B - B.mean(axis=1, keepdims=True)
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][: min(dim, n)]
    evals, evecs = evals[order], _sign_fix(evecs[:, order])
    coords = evecs * np.sqrt(np.clip(evals, 0.0, None))
    if coords.shape[1] < dim:
        coords = np.hstack([coords, np.zeros((n, dim - coords.shape[1]))])
    return PositionEstimate(coords.T, "cmds", {"eigenvalues": evals})


def _unit_range(pos: np.ndarray) -> np.ndarray:
    lo = pos.min(axis=1, keepdims=True)
    span = pos.max(axis=1, keepdims=True) - lo
    span[span == 0] = 1.0
    return (pos - lo) / span


def recover_sp(graph, dim: int = 1) -> PositionEstimate:
    """Hop distances followed by classical MDS, normalised to unit range."""
    g = graph if isinstance(graph, Graph) else Graph(graph)
    if not is_connected(g):
        raise DisconnectedGraphError("shortest-path recovery needs a connected graph")
    est = classical_mds(floyd_warshall(g), dim)
    return PositionEstimate(_unit_range(est.positions), "sp", {"dim": dim})


def spectral_rank(eigenvalues, rho0: float = 0.0) -> int:
    """Number of eigenvalues strictly above ``-(1 + rho0) * sigma_min``.

    An all-zero spectrum gives rank 0.
    """
    sig = np.asarray(eigenvalues, dtype=float).ravel()
    if sig.size == 0:
        raise ValueError("empty spectrum")
    if np.all(sig == 0):
        return 0
    return int(np.count_nonzero(sig > -(1.0 + rho0) * sig.min()))


def _descending_eigh(mat: np.ndarray):
    evals, evecs = np.linalg.eigh(mat)
    order = np.argsort(evals, kind="stable")[::-1]
    return evals[order], _sign_fix(evecs[:, order])


def denoise_adjacency(graph, rho0: float = 0.01) -> np.ndarray:
    """Low-rank reconstruction of the adjacency from its out-of-bulk eigenpairs."""
    adj = _adjacency(graph).astype(float)
    try:
        evals, evecs = _descending_eigh(adj)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError("eigensolver failed on adjacency matrix") from exc
    r = spectral_rank(evals, rho0)
    if r == 0:
        return np.zeros_like(adj)
    V = evecs[:, :r]
    K = (V * evals[:r]) @ V.T
    return 0.5 * (K + K.T)


def threshold_adjacency(K_hat, q: float) -> Graph:
    """Graph with an edge wherever ``K_hat[i, j] > q`` (diagonal dropped)."""
    K = np.asarray(K_hat, dtype=float)
    adj = K > q
    adj = adj & adj.T
    np.fill_diagonal(adj, False)
    return Graph(adj)


def recover_spectral(graph, cfg: SpectralConfig = SpectralConfig(), dim: int = 1) -> PositionEstimate:
    """Spectral denoising, thresholding at ``q``, then shortest-path recovery."""
    K_hat = denoise_adjacency(graph, cfg.rho0)
    A_q = threshold_adjacency(K_hat, cfg.q)
    if not is_connected(A_q):
        raise DisconnectedGraphError(f"thresholded graph is disconnected at q={cfg.q}", q=cfg.q)
    est = recover_sp(A_q, dim)
    return PositionEstimate(est.positions, "spectral", {"dim": dim, "q": cfg.q, "rho0": cfg.rho0})


def recover(graph, algorithm: str, cfg: SpectralConfig = SpectralConfig(), dim: int = 1) -> PositionEstimate:
    if algorithm == "sp":
        return recover_sp(graph, dim)
    if algorithm == "spectral":
        return recover_spectral(graph, cfg, dim)
    raise ValueError(f"unknown recovery algorithm {algorithm!r}")


def _positions(obj) -> np.ndarray:
    if isinstance(obj, (LatentSample, PositionEstimate)):
        return obj.positions
    return np.atleast_2d(np.asarray(obj, dtype=float))


def align_1d(estimate, truth) -> PositionEstimate:
    """Least-squares affine fit of a 1-d estimate onto the true positions.

    Used for error reporting only; estimated distances fed to ENW never go
    through this map.
    """
    est = _positions(estimate)
    tru = _positions(truth)
    if est.shape[0] != 1 or tru.shape[0] != 1:
        raise ValueError("align_1d needs one-dimensional positions")
    if est.shape != tru.shape:
        raise ValueError("estimate and truth have different node counts")
    e, t = est[0], tru[0]
    ec = e - e.mean()
    var = ec @ ec
    if var <= 0:
        raise ValueError("estimate has zero variance")
    scale = (ec @ (t - t.mean())) / var
    aligned = t.mean() + scale * ec
    params = dict(getattr(estimate, "params", {}))
    params["scale"] = float(scale)
    return PositionEstimate(aligned[None, :], getattr(estimate, "algorithm", ""), params)


def distances_from_positions(positions, query: int = -1) -> DistanceEstimate:
    """Euclidean distances from column ``query`` to every other column."""
    pos = _positions(positions)
    count = pos.shape[1]
    if not -count <= query < count:
        raise IndexError(f"query {query} out of range for {count} nodes")
    q = query % count
    diff = np.delete(pos, q, axis=1) - pos[:, q : q + 1]
    return DistanceEstimate(np.sqrt(np.sum(diff * diff, axis=0)))


def distance_error_delta(estimated, truth) -> float:
    """Sup-norm error ``max_i |est_i - true_i|``."""
    a = np.asarray(getattr(estimated, "values", estimated), dtype=float).ravel()
    b = np.asarray(getattr(truth, "values", truth), dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def position_error_D(aligned, truth) -> float:
    """Twice the largest per-node position error."""
    a = _positions(aligned)
    b = _positions(truth)
    if a.shape != b.shape:
        raise ValueError("estimate and truth have different node counts")
    return float(2.0 * np.max(np.sqrt(np.sum((a - b) ** 2, axis=0))))
