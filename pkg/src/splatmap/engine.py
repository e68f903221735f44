"""Optimization engine: initialization, lazy target schedule, gradient steps,
clamping, and convergence bookkeeping.

One "step" is one full-batch epoch over all points. Procrustes targets are
rebuilt every ``lazy_interval`` steps until ``freeze_epoch``; after that the
spatial anchors stay static and only the local Gaussian geometry keeps
refining. An initial target build happens at step 1 so the first loss
evaluation never sees an empty cache.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import SCALE_CLAMP_MAX, Dataset, FitConfig, GaussianSet, Regime, \
    quat_normalize
from .errors import DataError, DegenerateDataError, NumericalError
from .geometry import TargetCache, all_spatial_edges, covariance_targets_batch, \
    should_update_targets, update_targets
from .graph import NeighborGraph, all_high_dim_edges, build_knn, compute_weights
from .ingest import standardize
from .losses import LossReport, total_loss


class Adam:
    """Adaptive-moment gradient descent with bias correction.

    Moments are kept per named parameter group; each group has its own
    learning rate.
    """

    def __init__(self, learning_rates: dict[str, float], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = dict(learning_rates)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p -= self.lr[name] * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class FitResult:
    """Converged state plus everything needed to audit the run."""

    gaussians: GaussianSet
    history: list[LossReport]
    init_means: np.ndarray
    config: FitConfig
    wall_time: float
    graph: NeighborGraph
    target_cache: TargetCache | None = None
    target_update_steps: list[int] = field(default_factory=list)


def init_means(d: Dataset, strategy: str = "pca3", path=None,
               seed: int = 0) -> np.ndarray:
    """Initial embedding positions, rescaled to unit mean row norm.

    ``pca3`` projects onto the top-3 principal directions with a
    deterministic sign convention (largest-magnitude loading positive);
    ``external`` loads an N x 3 CSV verbatim before the rescale. ``seed``
    is reserved for future stochastic strategies.
    """
    if strategy == "pca3":
        centered = d.points - d.points.mean(axis=0)
        if d.n_features < 3:
            raise DataError(f"pca3 init needs at least 3 features, "
                            f"got {d.n_features}")
        _, _, Vt = np.linalg.svd(centered, full_matrices=False)
        comps = Vt[:3]
        lead = comps[np.arange(3), np.argmax(np.abs(comps), axis=1)]
        comps = comps * np.where(lead < 0.0, -1.0, 1.0)[:, None]
        means = centered @ comps.T
    elif strategy == "external":
        if path is None:
            raise DataError("external init requires a file path")
        try:
            means = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        except FileNotFoundError:
            raise DataError(f"init file not found: {path}") from None
        except ValueError as exc:
            raise DataError(f"cannot parse init file {path}: {exc}") from None
        if means.shape != (d.n_samples, 3):
            raise DataError(f"init file must be {d.n_samples} x 3, "
                            f"got {means.shape}")
    else:
        raise DataError(f"unknown init strategy {strategy!r}")

    scale = np.linalg.norm(means, axis=1).mean()
    if scale == 0.0:
        raise DegenerateDataError("initial embedding collapsed to the origin")
    return means / scale


def init_state(means: np.ndarray, cfg: FitConfig) -> GaussianSet:
    """Identity quaternions, uniform log-scales s_init, opacities unset."""
    n = means.shape[0]
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    return GaussianSet(means=np.array(means, dtype=np.float64, copy=True),
                       log_scales=np.full((n, 3), float(cfg.s_init)),
                       quaternions=quats)


def clamp_scales(state: GaussianSet, regime: Regime,
                 clamp_max: float | None = None,
                 clamp_min: float = -8.0) -> GaussianSet:
    """Clamp log-scales to the regime ceiling (-0.5 surface, 1.0 trajectory)
    and the common floor."""
    hi = SCALE_CLAMP_MAX[regime] if clamp_max is None else clamp_max
    clamped = np.clip(state.log_scales, clamp_min, hi)
    return GaussianSet(means=state.means, log_scales=clamped,
                       quaternions=state.quaternions,
                       opacities=state.opacities)


def fit(d: Dataset, cfg: FitConfig, *, graph: NeighborGraph | None = None,
        log_path=None, epoch_callback=None) -> FitResult:
    """Run the full optimization loop (Algorithm: M full-batch epochs).

    ``graph`` may be supplied to skip k-NN construction (e.g. loaded from a
    sidecar). ``epoch_callback(step, state, cache)`` is invoked after every
    epoch; the per-epoch training log is appended to ``log_path`` when given.
    """
    cfg.validate()
    if d.n_features < 3:
        raise DataError(f"fitting needs ambient dimension >= 3, "
                        f"got {d.n_features}")
    if d.n_samples < cfg.k + 1:
        raise DataError(f"need at least k+1 = {cfg.k + 1} samples, "
                        f"got {d.n_samples}")
    t0 = time.perf_counter()
    if cfg.standardize:
        d = standardize(d)

    if graph is None:
        graph = compute_weights(build_knn(d, cfg.k), cfg.kernel_sigma_mode,
                                cfg.kernel_sigma)
    elif graph.weights is None:
        graph = compute_weights(graph, cfg.kernel_sigma_mode, cfg.kernel_sigma)

    means0 = init_means(d, cfg.init_strategy, cfg.init_path, cfg.seed)
    state = init_state(means0, cfg)
    E_all = all_high_dim_edges(d.points, graph.neighbors)

    cache: TargetCache | None = None
    adam = Adam({"means": cfg.lr_means, "log_scales": cfg.lr_log_scales,
                 "quaternions": cfg.lr_quats})
    history: list[LossReport] = []
    update_steps: list[int] = []
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for step in range(1, cfg.epochs + 1):
            if cache is None or should_update_targets(step, cfg):
                cache = update_targets(state.means, E_all, graph, cfg, step)
                update_steps.append(step)
            cache.frozen = step > cfg.freeze_epoch
            if cfg.regime is Regime.SURFACE:
                # Live footprint targets: follow the current spatial edges.
                cache.c_target = covariance_targets_batch(
                    all_spatial_edges(state.means, graph.neighbors),
                    graph.weights)

            report, grads = total_loss(cfg, state, cache, graph)
            if not np.isfinite(report.l_total):
                raise NumericalError(
                    f"non-finite loss at epoch {step}: l_r={report.l_r} "
                    f"l_c={report.l_c} l_o={report.l_o}")
            params = {"means": state.means, "log_scales": state.log_scales,
                      "quaternions": state.quaternions}
            adam.step(params, grads)
            state.log_scales = np.clip(state.log_scales, cfg.scale_clamp_min,
                                       cfg.effective_scale_clamp())
            norms = np.linalg.norm(state.quaternions, axis=1)
            if np.any(norms == 0.0) or not np.all(np.isfinite(norms)):
                raise NumericalError(f"degenerate quaternion at epoch {step}")
            state.quaternions = quat_normalize(state.quaternions)

            history.append(report)
            if log_fh:
                log_fh.write(report.log_line(step) + "\n")
            if epoch_callback is not None:
                epoch_callback(step, state, cache)
    finally:
        if log_fh:
            log_fh.close()

    return FitResult(gaussians=state, history=history, init_means=means0,
                     config=cfg, wall_time=time.perf_counter() - t0,
                     graph=graph, target_cache=cache,
                     target_update_steps=update_steps)
