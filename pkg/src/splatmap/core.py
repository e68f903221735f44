"""Fundamental data types and the quaternion/covariance algebra.

Quaternions are stored in (w, x, y, z) order throughout; the PLY exporter
depends on this ordering. Per-primitive covariances are never stored: they
are always derived from (quaternion, log-scales), which keeps them positive
semi-definite by construction.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError, DataError, DegenerateQuaternionError


class Regime(enum.Enum):
    """Topological regime of the fit: 1D trajectory or intrinsic 2D surface."""

    TRAJECTORY = "trajectory"
    SURFACE = "surface"


# Per-regime upper clamp on log-scales during training: surfaces stay thin
# planar elements, trajectories may elongate to bridge gaps.
SCALE_CLAMP_MAX = {Regime.SURFACE: -0.5, Regime.TRAJECTORY: 1.0}
# Floor in both regimes; prevents zero-volume primitives in exported files.
SCALE_CLAMP_MIN = -8.0


@dataclass
class Dataset:
    """N high-dimensional samples with optional scalar feature and labels."""

    points: np.ndarray                  # (N, n) float64
    energy: np.ndarray | None = None    # (N,) float64
    labels: np.ndarray | None = None    # (N,) int64
    name: str = "dataset"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise DataError(f"points must be a 2-D N x n matrix with n >= 1, "
                            f"got shape {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise DataError("points contain non-finite entries")
        if self.energy is not None:
            self.energy = np.asarray(self.energy, dtype=np.float64)
            if self.energy.shape != (self.n_samples,):
                raise DataError(f"energy must have length {self.n_samples}, "
                                f"got shape {self.energy.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n_samples,):
                raise DataError(f"labels must have length {self.n_samples}, "
                                f"got shape {self.labels.shape}")

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1]


@dataclass
class GaussianSet:
    """Optimizable splat state: means, log-scales, quaternions, opacities.

    Opacities are derived at export time (not optimized) and stay ``None``
    during fitting.
    """

    means: np.ndarray                   # (N, 3)
    log_scales: np.ndarray              # (N, 3)
    quaternions: np.ndarray             # (N, 4), (w, x, y, z)
    opacities: np.ndarray | None = None  # (N,) in [0, 1]

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.log_scales = np.asarray(self.log_scales, dtype=np.float64)
        self.quaternions = np.asarray(self.quaternions, dtype=np.float64)
        n = self.means.shape[0]
        if self.means.shape != (n, 3) or self.log_scales.shape != (n, 3) \
                or self.quaternions.shape != (n, 4):
            raise DataError("inconsistent GaussianSet array shapes")

    @property
    def n_gaussians(self) -> int:
        return self.means.shape[0]

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            self.means.copy(), self.log_scales.copy(), self.quaternions.copy(),
            None if self.opacities is None else self.opacities.copy())


@dataclass
class FitConfig:
    """Everything that determines a fit: regime, weights, schedule, rates.

    ``scale_clamp_max=None`` means "use the regime default" (-0.5 surface,
    1.0 trajectory).
    """

    regime: Regime = Regime.SURFACE
    k: int = 15
    lambda_r: float = 10.0
    lambda_c: float = 10.0
    lambda_o: float = 2.0
    epochs: int = 200                 # M
    lazy_interval: int = 15           # tau
    freeze_epoch: int = 100           # M_stop
    huber_beta: float = 0.5
    scale_clamp_max: float | None = None
    scale_clamp_min: float = SCALE_CLAMP_MIN
    s_init: float = -2.0
    lr_means: float = 5e-3
    lr_log_scales: float = 1e-2
    lr_quats: float = 1e-2
    seed: int = 0
    kernel_sigma_mode: str = "adaptive"   # "adaptive" | "fixed"
    kernel_sigma: float | None = None     # required when mode == "fixed"
    init_strategy: str = "pca3"           # "pca3" | "external"
    init_path: str | None = None
    standardize: bool = True
    det_sign_correction: bool = False
    normalize_rigidity: bool = False

    def validate(self) -> None:
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.lazy_interval < 1:
            raise ConfigError("lazy_interval must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 <= self.freeze_epoch <= max(self.epochs, self.freeze_epoch):
            raise ConfigError("freeze_epoch must be >= 0")
        if self.epochs and self.freeze_epoch > self.epochs:
            raise ConfigError(f"freeze_epoch ({self.freeze_epoch}) must not "
                              f"exceed epochs ({self.epochs})")
        if min(self.lambda_r, self.lambda_c, self.lambda_o) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.huber_beta <= 0:
            raise ConfigError("huber_beta must be > 0")
        if min(self.lr_means, self.lr_log_scales, self.lr_quats) <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.kernel_sigma_mode not in ("adaptive", "fixed"):
            raise ConfigError(f"unknown kernel_sigma_mode "
                              f"{self.kernel_sigma_mode!r}")
        if self.kernel_sigma_mode == "fixed" and (
                self.kernel_sigma is None or self.kernel_sigma <= 0):
            raise ConfigError("fixed kernel mode requires kernel_sigma > 0")
        if self.init_strategy not in ("pca3", "external"):
            raise ConfigError(f"unknown init_strategy {self.init_strategy!r}")
        if self.init_strategy == "external" and not self.init_path:
            raise ConfigError("external init requires init_path")
        if self.scale_clamp_max is not None \
                and self.scale_clamp_max < self.scale_clamp_min:
            raise ConfigError("scale_clamp_max below scale_clamp_min")

    def effective_scale_clamp(self) -> float:
        if self.scale_clamp_max is not None:
            return self.scale_clamp_max
        return SCALE_CLAMP_MAX[self.regime]

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.value if isinstance(v, Regime) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in d.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "regime":
                try:
                    value = Regime(value)
                except ValueError:
                    raise ConfigError(f"unknown regime {value!r}") from None
            kwargs[key] = value
        return cls(**kwargs)

    def replace(self, **kwargs) -> "FitConfig":
        return replace(self, **kwargs)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale quaternion(s) to unit norm.

    Accepts a single (4,) vector or an (..., 4) batch. Raises
    DegenerateQuaternionError on any zero-norm input.
    """
    q = np.asarray(q, dtype=np.float64)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateQuaternionError("cannot normalize zero quaternion")
    return q / norms


def _rotation_from_unit(u: np.ndarray) -> np.ndarray:
    """Rotation matrices from unit quaternions, (..., 4) -> (..., 3, 3)."""
    w, x, y, z = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    R = np.empty(u.shape[:-1] + (3, 3), dtype=np.float64)
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def quat_to_rotation(q: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Rotation matrix of a unit quaternion (w, x, y, z).

    The input must already be normalized (within ``atol``); orientations
    produced by the optimizer are renormalized before they get here.
    """
    q = np.asarray(q, dtype=np.float64)
    norms = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norms - 1.0) > atol):
        raise ValueError(f"quaternion norm deviates from 1 by more than "
                         f"{atol}: max |norm-1| = {np.max(np.abs(norms - 1.0))}")
    return _rotation_from_unit(q)


def build_covariance(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Covariance R diag(exp(2s)) R^T from unit quaternion(s) and log-scales.

    Symmetric PSD by construction; eigenvalues are exp(2 s_j).
    """
    R = quat_to_rotation(q)
    s = np.asarray(s, dtype=np.float64)
    d = np.exp(2.0 * s)
    return (R * d[..., None, :]) @ np.swapaxes(R, -1, -2)
