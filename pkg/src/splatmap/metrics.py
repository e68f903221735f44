"""Embedding quality metrics: Kruskal Stress-1, Trustworthiness, Continuity,
plus per-point diagnostics used by the ablation protocol.

Rank metrics follow the Venna-Kaski definitions; rank ties are broken by
point index so results are deterministic. Stress-1 applies the optimal
uniform scale to the embedding distances by default, making it invariant to
similarity transforms (the raw variant is available behind a flag).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import GaussianSet, quat_normalize
from .errors import ConfigError, DataError
from .graph import NeighborGraph

# Above this N, stress switches from all pairs to a seeded pair sample.
STRESS_EXACT_MAX_N = 5000
STRESS_SAMPLE_PAIRS = 2_000_000
_STRESS_SAMPLE_SEED = 0


@dataclass
class MetricsReport:
    stress1: float
    trustworthiness: float
    continuity: float
    k: int
    n_pairs_used: int


def _check_pair(high: np.ndarray, low: np.ndarray):
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    if high.shape[0] != low.shape[0]:
        raise DataError(f"row-count mismatch: {high.shape[0]} high-dim rows "
                        f"vs {low.shape[0]} embedding rows")
    if high.shape[0] < 2:
        raise DataError("metrics need at least 2 points")
    return high, low


def stress1(high: np.ndarray, low: np.ndarray,
            optimal_scale: bool = True) -> float:
    """Kruskal Stress-1 between embedding and original distances.

    sqrt( sum (alpha d - delta)^2 / sum delta^2 ) over unordered pairs,
    where alpha is the least-squares uniform scale on the embedding
    distances (or 1 when ``optimal_scale=False``).
    """
    high, low = _check_pair(high, low)
    n = high.shape[0]
    n_all = n * (n - 1) // 2
    if n <= STRESS_EXACT_MAX_N:
        delta = pdist(high)
        d = pdist(low)
    else:
        rng = np.random.default_rng(_STRESS_SAMPLE_SEED)
        i = rng.integers(0, n, STRESS_SAMPLE_PAIRS)
        j = rng.integers(0, n - 1, STRESS_SAMPLE_PAIRS)
        j = np.where(j >= i, j + 1, j)  # uniform over off-diagonal pairs
        delta = np.linalg.norm(high[i] - high[j], axis=1)
        d = np.linalg.norm(low[i] - low[j], axis=1)
    denom = float((delta * delta).sum())
    if denom == 0.0:
        raise DataError("all high-dimensional points are identical")
    if optimal_scale:
        dd = float((d * d).sum())
        alpha = float((d * delta).sum()) / dd if dd > 0.0 else 0.0
    else:
        alpha = 1.0
    resid = alpha * d - delta
    return float(np.sqrt(float((resid * resid).sum()) / denom))


def stress_pairs_used(n: int) -> int:
    n_all = n * (n - 1) // 2
    return n_all if n <= STRESS_EXACT_MAX_N else STRESS_SAMPLE_PAIRS


def _rank_order(X: np.ndarray):
    """Neighbor ordering and 1-based ranks by distance with index tie-break.

    Returns (order, rank): order[i] lists the other points nearest-first
    (self forced last); rank[i, j] is the 1-based rank of j from i.
    """
    n = X.shape[0]
    sq = cdist(X, X, metric="sqeuclidean")
    idx = np.arange(n)
    sq[idx, idx] = np.inf
    tie = np.broadcast_to(idx, sq.shape)
    order = np.lexsort((tie, sq), axis=-1)
    rank = np.empty((n, n), dtype=np.int64)
    np.put_along_axis(rank, order, np.broadcast_to(idx + 1, order.shape),
                      axis=1)
    return order, rank


def _knn_mask(order: np.ndarray, k: int) -> np.ndarray:
    n = order.shape[0]
    mask = np.zeros((n, n), dtype=bool)
    np.put_along_axis(mask, order[:, :k], True, axis=1)
    return mask


def _rank_penalty_value(acc: int, n: int, k: int) -> float:
    return 1.0 - (2.0 * acc) / (n * k * (2 * n - 3 * k - 1))


def trustworthiness(high: np.ndarray, low: np.ndarray, k: int) -> float:
    """Penalizes embedding neighbors that are not neighbors in the original
    space (Venna-Kaski), in [0, 1], 1 = perfectly trustworthy."""
    high, low = _check_pair(high, low)
    n = high.shape[0]
    if not 1 <= k < n / 2:
        raise ConfigError(f"k must satisfy 1 <= k < N/2 = {n / 2}, got {k}")
    order_h, rank_h = _rank_order(high)
    order_l, _ = _rank_order(low)
    intruders = _knn_mask(order_l, k) & ~_knn_mask(order_h, k)
    acc = int((rank_h[intruders] - k).sum())
    return _rank_penalty_value(acc, n, k)


def continuity(high: np.ndarray, low: np.ndarray, k: int) -> float:
    """Penalizes original-space neighbors missing from the embedding
    neighborhood; the role-swapped twin of trustworthiness."""
    high, low = _check_pair(high, low)
    n = high.shape[0]
    if not 1 <= k < n / 2:
        raise ConfigError(f"k must satisfy 1 <= k < N/2 = {n / 2}, got {k}")
    order_h, _ = _rank_order(high)
    order_l, rank_l = _rank_order(low)
    missing = _knn_mask(order_h, k) & ~_knn_mask(order_l, k)
    acc = int((rank_l[missing] - k).sum())
    return _rank_penalty_value(acc, n, k)


def evaluate(high: np.ndarray, low: np.ndarray, k: int,
             optimal_scale: bool = True) -> MetricsReport:
    """All three metrics in one report (rank orderings computed once)."""
    high, low = _check_pair(high, low)
    n = high.shape[0]
    if not 1 <= k < n / 2:
        raise ConfigError(f"k must satisfy 1 <= k < N/2 = {n / 2}, got {k}")
    order_h, rank_h = _rank_order(high)
    order_l, rank_l = _rank_order(low)
    mask_h = _knn_mask(order_h, k)
    mask_l = _knn_mask(order_l, k)
    acc_t = int((rank_h[mask_l & ~mask_h] - k).sum())
    acc_c = int((rank_l[mask_h & ~mask_l] - k).sum())
    return MetricsReport(
        stress1=stress1(high, low, optimal_scale),
        trustworthiness=_rank_penalty_value(acc_t, n, k),
        continuity=_rank_penalty_value(acc_c, n, k),
        k=k,
        n_pairs_used=stress_pairs_used(n),
    )


def anisotropy_ratios(state: GaussianSet) -> np.ndarray:
    """Per-point exp(max log-scale - min log-scale); 1 means spherical."""
    s = state.log_scales
    return np.exp(s.max(axis=1) - s.min(axis=1))


def neighbor_alignment(state: GaussianSet, g: NeighborGraph) -> float:
    """Mean (q_i . q_j)^2 over all directed neighbor pairs, in [0, 1]."""
    u = quat_normalize(state.quaternions)
    c = np.einsum("nc,nkc->nk", u, u[g.neighbors])
    return float((c * c).mean())
