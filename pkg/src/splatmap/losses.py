"""The three loss terms and their exact gradients w.r.t. (means, log-scales,
quaternions).

Quaternion-dependent losses normalize the quaternions internally, and their
analytic gradients include the normalization Jacobian (I - u u^T)/|q|. At
unit norm this is exactly the projection of the raw Euclidean gradient onto
the tangent of the unit sphere, so a finite-difference probe of the loss
agrees with the analytic gradient coordinate-by-coordinate even off the
sphere. Targets held in the cache are constants: no gradient flows into
them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FitConfig, GaussianSet, Regime, _rotation_from_unit, \
    quat_normalize
from .errors import ConfigError
from .geometry import TargetCache, all_spatial_edges
from .graph import NeighborGraph


@dataclass
class LossReport:
    """Scalar loss terms plus the norm of each term's (unweighted) gradient."""

    l_r: float
    l_c: float
    l_o: float
    l_total: float
    grad_norm_r: float
    grad_norm_c: float
    grad_norm_o: float

    def log_line(self, step: int) -> str:
        return (f"step={step} l_r={self.l_r!r} l_c={self.l_c!r} "
                f"l_o={self.l_o!r} l_total={self.l_total!r}")


def huber(r, beta: float) -> float:
    """Elementwise Huber penalty summed over all entries.

    Quadratic 0.5 x^2 for |x| <= beta, linear beta (|x| - beta/2) beyond;
    both branches meet at 0.5 beta^2.
    """
    if beta <= 0:
        raise ConfigError(f"huber beta must be > 0, got {beta}")
    r = np.asarray(r, dtype=np.float64)
    a = np.abs(r)
    quad = a <= beta
    return float(np.where(quad, 0.5 * r * r, beta * (a - 0.5 * beta)).sum())


def _huber_grad(r: np.ndarray, beta: float) -> np.ndarray:
    return np.clip(r, -beta, beta)


def rigidity_loss(regime: Regime, means: np.ndarray, cache: TargetCache,
                  g: NeighborGraph, beta: float,
                  normalize: bool = False):
    """Edge-matching loss against the frozen Procrustes targets.

    Surface regime: sum_i |V_i - V_ideal|_F^2 (quadratic, enforces strict
    local rigidity). Trajectory regime: elementwise Huber with threshold
    ``beta`` so isometric jumps are absorbed linearly instead of fracturing
    the path. Returns (value, gradient w.r.t. means); each edge residual
    pushes both of its endpoints with opposite signs.
    """
    nb = g.neighbors
    residual = all_spatial_edges(means, nb) - cache.v_ideal     # (N, k, 3)
    if regime is Regime.SURFACE:
        value = float((residual * residual).sum())
        gmat = 2.0 * residual
    else:
        value = huber(residual, beta)
        gmat = _huber_grad(residual, beta)
    grad = np.zeros_like(means)
    np.add.at(grad, nb, gmat)
    grad -= gmat.sum(axis=1)
    if normalize:
        n = means.shape[0]
        value /= n
        grad /= n
    return value, grad


def _covariances_from_unit(u: np.ndarray, s: np.ndarray):
    R = _rotation_from_unit(u)
    d = np.exp(2.0 * s)
    sigma = (R * d[:, None, :]) @ np.swapaxes(R, -1, -2)
    return R, d, sigma


def _rotation_grad_to_quat(u: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Contract dL/dR (N,3,3) with dR/du for unit quaternions u (N,4)."""
    w, x, y, z = u[:, 0], u[:, 1], u[:, 2], u[:, 3]
    a00, a01, a02 = A[:, 0, 0], A[:, 0, 1], A[:, 0, 2]
    a10, a11, a12 = A[:, 1, 0], A[:, 1, 1], A[:, 1, 2]
    a20, a21, a22 = A[:, 2, 0], A[:, 2, 1], A[:, 2, 2]
    gw = 2.0 * (z * (a10 - a01) + y * (a02 - a20) + x * (a21 - a12))
    gx = 2.0 * (y * (a01 + a10) + z * (a02 + a20)
                - 2.0 * x * (a11 + a22) + w * (a21 - a12))
    gy = 2.0 * (x * (a01 + a10) + z * (a12 + a21)
                - 2.0 * y * (a00 + a22) + w * (a02 - a20))
    gz = 2.0 * (x * (a02 + a20) + y * (a12 + a21)
                - 2.0 * z * (a00 + a11) + w * (a10 - a01))
    return np.stack([gw, gx, gy, gz], axis=1)


def _chain_through_normalization(q: np.ndarray, u: np.ndarray,
                                 grad_u: np.ndarray) -> np.ndarray:
    """Pull dL/du back to the raw quaternion: (I - u u^T) grad_u / |q|."""
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    radial = (u * grad_u).sum(axis=1, keepdims=True)
    return (grad_u - u * radial) / norms


def covariance_loss(gaussians: GaussianSet, cache: TargetCache):
    """Mean squared Frobenius distance between built covariances and targets.

    Returns (value, grad wrt log-scales, grad wrt quaternions). Targets are
    constants; gradients flow only through Sigma = R S S^T R^T.
    """
    q = gaussians.quaternions
    s = gaussians.log_scales
    n = q.shape[0]
    u = quat_normalize(q)
    R, d, sigma = _covariances_from_unit(u, s)
    delta = sigma - cache.c_target
    value = float((delta * delta).sum()) / n

    G = (2.0 / n) * delta                                    # dL/dSigma
    # dL/d d_j = (R^T G R)_jj ; d d_j/d s_j = 2 d_j
    diag_RtGR = np.einsum("nji,njk,nki->ni", R, G, R)
    grad_s = 2.0 * d * diag_RtGR
    grad_R = 2.0 * G @ (R * d[:, None, :])
    grad_u = _rotation_grad_to_quat(u, grad_R)
    grad_q = _chain_through_normalization(q, u, grad_u)
    return value, grad_s, grad_q


def orientation_loss(gaussians: GaussianSet, g: NeighborGraph):
    """Angular misalignment between neighboring orientations.

    (1/N) sum_i (1/k) sum_j (1 - (q_i . q_j)^2) over normalized quaternions;
    the square respects the double cover (q and -q are the same rotation).
    Value always lies in [0, 1]. Returns (value, grad wrt quaternions).
    """
    q = gaussians.quaternions
    nb = g.neighbors
    n, k = nb.shape
    u = quat_normalize(q)
    u_j = u[nb]                                              # (N, k, 4)
    c = np.einsum("nc,nkc->nk", u, u_j)
    value = float((1.0 - c * c).sum()) / (n * k)

    coeff = (-2.0 / (n * k)) * c                             # (N, k)
    grad_u = np.einsum("nk,nkc->nc", coeff, u_j)
    np.add.at(grad_u, nb, coeff[:, :, None] * u[:, None, :])
    grad_q = _chain_through_normalization(q, u, grad_u)
    return value, grad_q


def total_loss(cfg: FitConfig, state: GaussianSet, cache: TargetCache,
               g: NeighborGraph):
    """Weighted sum of the three terms plus the full gradient.

    Returns (LossReport, {"means": ..., "log_scales": ..., "quaternions": ...})
    with each gradient already weighted by its lambda.
    """
    l_r, grad_means = rigidity_loss(cfg.regime, state.means, cache, g,
                                    cfg.huber_beta, cfg.normalize_rigidity)
    l_c, grad_s, grad_q_c = covariance_loss(state, cache)
    l_o, grad_q_o = orientation_loss(state, g)
    l_total = cfg.lambda_r * l_r + cfg.lambda_c * l_c + cfg.lambda_o * l_o
    report = LossReport(
        l_r=l_r, l_c=l_c, l_o=l_o, l_total=l_total,
        grad_norm_r=float(np.linalg.norm(grad_means)),
        grad_norm_c=float(np.sqrt(np.linalg.norm(grad_s) ** 2
                                  + np.linalg.norm(grad_q_c) ** 2)),
        grad_norm_o=float(np.linalg.norm(grad_q_o)),
    )
    grads = {
        "means": cfg.lambda_r * grad_means,
        "log_scales": cfg.lambda_c * grad_s,
        "quaternions": cfg.lambda_c * grad_q_c + cfg.lambda_o * grad_q_o,
    }
    return report, grads
