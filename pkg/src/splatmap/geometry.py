"""Procrustes rigidity targets and regime-dependent covariance targets.

For each point the cross-covariance between its current 3D edge matrix V_i
and its high-dimensional edge matrix E_i is decomposed by SVD; dropping the
singular values yields the best semi-orthogonal map P_i (3 x n, with
P_i P_i^T = I), and V_ideal = E_i P_i^T is the rigid local projection the
losses pull toward. Targets are treated as constants by the losses: no
gradient flows through the SVD or through the edges used to build them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FitConfig, Regime
from .errors import DataError
from .graph import NeighborGraph


@dataclass
class TargetCache:
    """Frozen per-point Procrustes projections and covariance targets."""

    v_ideal: np.ndarray          # (N, k, 3)
    c_target: np.ndarray         # (N, 3, 3) symmetric PSD
    frozen: bool = False
    last_update_step: int = 0


def spatial_edges(means: np.ndarray, g: NeighborGraph, i: int) -> np.ndarray:
    """Embedding-space displacement rows mu_j - mu_i for neighbors of i."""
    return means[g.neighbors[i]] - means[i]


def all_spatial_edges(means: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """All embedding edge matrices stacked: (N, k, 3)."""
    return means[neighbors] - means[:, None, :]


def _canonicalize_svd_signs(U: np.ndarray, Wt: np.ndarray):
    """Flip paired singular vectors so each column of U has its first
    nonzero entry positive.

    Joint flips leave U @ Wt unchanged wherever the singular value is
    nonzero; for (numerically) null directions this pins an otherwise
    arbitrary sign, making degenerate-rank results deterministic.
    """
    nonzero = U != 0.0
    first = np.argmax(nonzero, axis=-2)                      # (..., 3)
    lead = np.take_along_axis(U, first[..., None, :], axis=-2)[..., 0, :]
    signs = np.where(lead < 0.0, -1.0, 1.0)
    return U * signs[..., None, :], Wt * signs[..., :, None]


def procrustes_batch(V: np.ndarray, E: np.ndarray,
                     det_sign_correction: bool = False):
    """Semi-orthogonal Procrustes maps for stacked edge matrices.

    V: (N, k, 3) spatial edges, E: (N, k, n) high-dim edges with n >= 3.
    Returns (P, V_ideal) with P: (N, 3, n), P P^T = I_3, and
    V_ideal = E P^T: (N, k, 3).
    """
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(E))):
        raise DataError("non-finite entries in Procrustes inputs")
    n = E.shape[-1]
    if n < 3:
        raise DataError(f"Procrustes projection needs ambient dimension >= 3, "
                        f"got {n}")
    M = np.swapaxes(V, -1, -2) @ E                           # (N, 3, n)
    U, _, Wt = np.linalg.svd(M, full_matrices=False)         # (N,3,3),(N,3,n)
    U, Wt = _canonicalize_svd_signs(U, Wt)
    if det_sign_correction and n == 3:
        # Kabsch-style: force det(P) = +1 by flipping the weakest direction.
        det = np.linalg.det(U @ Wt)
        U[det < 0, :, 2] *= -1.0
    P = U @ Wt
    V_ideal = E @ np.swapaxes(P, -1, -2)
    return P, V_ideal


def procrustes_target(V_i: np.ndarray, E_i: np.ndarray,
                      det_sign_correction: bool = False):
    """Single-point Procrustes: (P_i: 3 x n semi-orthogonal, V_ideal: k x 3)."""
    V_i = np.asarray(V_i, dtype=np.float64)
    E_i = np.asarray(E_i, dtype=np.float64)
    if V_i.shape[0] < 2:
        raise DataError("Procrustes needs at least 2 neighbor edges")
    P, V_ideal = procrustes_batch(V_i[None], E_i[None], det_sign_correction)
    return P[0], V_ideal[0]


def covariance_targets_batch(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted edge outer-product sums: (N, k, 3), (N, k) -> (N, 3, 3)."""
    return np.einsum("nk,nka,nkb->nab", w, v, v)


def covariance_target(regime: Regime, V_i: np.ndarray, V_ideal_i: np.ndarray,
                      w_i: np.ndarray) -> np.ndarray:
    """Target covariance sum_j w_ij v_ij v_ij^T for one point.

    Surface regime reads the edge vectors from the current spatial edges
    (capturing emergent curvature); trajectory regime reads them from
    V_ideal so buckling in 3D cannot drag the footprint off the intrinsic
    1D path.
    """
    v = np.asarray(V_i if regime is Regime.SURFACE else V_ideal_i,
                   dtype=np.float64)
    w = np.asarray(w_i, dtype=np.float64)
    return np.einsum("k,ka,kb->ab", w, v, v)


def should_update_targets(step: int, cfg: FitConfig) -> bool:
    """Lazy schedule: refresh targets every tau steps until the freeze epoch."""
    return step % cfg.lazy_interval == 0 and step <= cfg.freeze_epoch


def update_targets(means: np.ndarray, E_all: np.ndarray, g: NeighborGraph,
                   cfg: FitConfig, step: int) -> TargetCache:
    """Recompute V_ideal (and, in the trajectory regime, C_target) for all
    points from the current means.

    Surface-regime C_target is rebuilt from the live means every step by the
    engine; the value stored here is just its initial snapshot.
    """
    V_all = all_spatial_edges(means, g.neighbors)
    _, v_ideal = procrustes_batch(V_all, E_all, cfg.det_sign_correction)
    if cfg.regime is Regime.TRAJECTORY:
        c_target = covariance_targets_batch(v_ideal, g.weights)
    else:
        c_target = covariance_targets_batch(V_all, g.weights)
    return TargetCache(v_ideal=v_ideal, c_target=c_target,
                       frozen=step > cfg.freeze_epoch, last_update_step=step)
