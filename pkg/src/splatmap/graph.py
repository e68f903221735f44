"""k-NN neighborhood structure in R^n and high-dimensional affinity weights.

The graph is built exactly (blocked all-pairs, ties broken by smaller
index), once, on the high-dimensional data, and never rebuilt during
optimization. Exactness keeps runs deterministic and removes the
approximate-index confounder from neighborhood-sensitive results.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset
from .errors import ConfigError, DataError

GRAPH_MAGIC = b"TGSG"


@dataclass
class NeighborGraph:
    """Per-point k nearest neighbors, distances (ascending) and weights.

    ``weights`` is None until :func:`compute_weights` fills it; each filled
    row is non-negative and sums to 1.
    """

    neighbors: np.ndarray               # (N, k) int64
    distances: np.ndarray               # (N, k) float64, sorted ascending
    weights: np.ndarray | None = None   # (N, k) float64

    @property
    def n_points(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]


def build_knn(d: Dataset, k: int, block_size: int = 512) -> NeighborGraph:
    """Exact Euclidean k nearest neighbors for every point.

    Distance ties are broken by the smaller point index; self-matches are
    excluded. Weights are left unfilled.
    """
    X = d.points
    N = X.shape[0]
    if k >= N:
        raise ConfigError(f"k ({k}) must be smaller than N ({N})")
    if k < 1:
        raise ConfigError("k must be >= 1")

    neighbors = np.empty((N, k), dtype=np.int64)
    distances = np.empty((N, k), dtype=np.float64)
    all_idx = np.arange(N)
    for lo in range(0, N, block_size):
        hi = min(lo + block_size, N)
        sq = cdist(X[lo:hi], X, metric="sqeuclidean")
        sq[all_idx[lo:hi] - lo, all_idx[lo:hi]] = np.inf  # mask self
        tie_idx = np.broadcast_to(all_idx, sq.shape)
        order = np.lexsort((tie_idx, sq), axis=-1)[:, :k]
        neighbors[lo:hi] = order
        distances[lo:hi] = np.sqrt(np.take_along_axis(sq, order, axis=1))
    return NeighborGraph(neighbors, distances)


def compute_weights(g: NeighborGraph, mode: str = "adaptive",
                    sigma: float | None = None) -> NeighborGraph:
    """Fill normalized Gaussian-kernel weights over the stored distances.

    w_ij = exp(-d_ij^2 / 2 sigma_i^2) normalized per row. ``adaptive`` mode
    uses sigma_i = mean of the k distances of point i; ``fixed`` uses the
    supplied sigma for every point. Rows of coincident points (all-zero
    distances) fall back to uniform weights with a warning.
    """
    if mode not in ("adaptive", "fixed"):
        raise ConfigError(f"unknown kernel sigma mode {mode!r}")
    if mode == "fixed":
        if sigma is None or sigma <= 0:
            raise ConfigError("fixed kernel mode requires sigma > 0")
        sig = np.full(g.n_points, float(sigma))
    else:
        sig = g.distances.mean(axis=1)

    dsq = g.distances ** 2
    weights = np.empty_like(dsq)
    degenerate = sig == 0.0
    if np.any(degenerate):
        warnings.warn(f"{int(degenerate.sum())} point(s) have all-zero "
                      f"neighbor distances; using uniform weights",
                      RuntimeWarning)
        weights[degenerate] = 1.0 / g.k
    ok = ~degenerate
    if np.any(ok):
        z = dsq[ok] / (2.0 * sig[ok, None] ** 2)
        z = z - z.min(axis=1, keepdims=True)  # guard exp underflow
        e = np.exp(-z)
        weights[ok] = e / e.sum(axis=1, keepdims=True)
    return replace(g, weights=weights)


def high_dim_edges(d: Dataset, g: NeighborGraph, i: int) -> np.ndarray:
    """Displacement rows x_j - x_i for the neighbors j of point i."""
    if not 0 <= i < d.n_samples:
        raise IndexError(f"point index {i} out of range 0..{d.n_samples - 1}")
    return d.points[g.neighbors[i]] - d.points[i]


def all_high_dim_edges(points: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """All displacement matrices stacked: (N, k, n)."""
    return points[neighbors] - points[:, None, :]


def save_graph(g: NeighborGraph, path) -> None:
    """Write the graph as a little-endian binary sidecar (magic ``TGSG``).

    Layout: magic, u32 N, u32 k, then row-major u32 indices, f64 distances
    and f64 weights. Weights must be filled.
    """
    if g.weights is None:
        raise DataError("graph weights must be computed before saving")
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<II", g.n_points, g.k))
        fh.write(g.neighbors.astype("<u4").tobytes())
        fh.write(g.distances.astype("<f8").tobytes())
        fh.write(g.weights.astype("<f8").tobytes())


def load_graph(path) -> NeighborGraph:
    """Read a sidecar written by :func:`save_graph`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != GRAPH_MAGIC:
        raise DataError(f"not a graph sidecar file (bad magic): {path}")
    N, k = struct.unpack("<II", blob[4:12])
    nk = N * k
    expected = 12 + nk * 4 + nk * 8 * 2
    if len(blob) != expected:
        raise DataError(f"graph sidecar truncated: expected {expected} bytes, "
                        f"found {len(blob)}")
    off = 12
    neighbors = np.frombuffer(blob, dtype="<u4", count=nk, offset=off) \
        .reshape(N, k).astype(np.int64)
    off += nk * 4
    distances = np.frombuffer(blob, dtype="<f8", count=nk, offset=off) \
        .reshape(N, k).copy()
    off += nk * 8
    weights = np.frombuffer(blob, dtype="<f8", count=nk, offset=off) \
        .reshape(N, k).copy()
    return NeighborGraph(neighbors, distances, weights)
