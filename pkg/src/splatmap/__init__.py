"""splatmap: dimensionality reduction onto anisotropic 3D Gaussian splats.

High-dimensional data is embedded as a set of optimizable 3D Gaussians
(means, log-scales, quaternions) driven by three geometric losses: local
Procrustes rigidity, covariance alignment to the local neighborhood
footprint, and orientation smoothing between neighbors. The converged set
exports to a standard splat PLY plus quality metrics.
"""

__version__ = "0.1.0"

from .core import (Dataset, FitConfig, GaussianSet, Regime, build_covariance,
                   quat_normalize, quat_to_rotation)
from .engine import Adam, FitResult, clamp_scales, fit, init_means, init_state
from .errors import (ConfigError, CsvParseError, DataError,
                     DegenerateDataError, DegenerateQuaternionError,
                     NumericalError, SplatmapError)
from .export import (opacity_map, read_ply, read_ply_means,
                     visual_scale_expand, write_ply, write_report)
from .geometry import (TargetCache, covariance_target, procrustes_target,
                       should_update_targets, spatial_edges)
from .graph import (NeighborGraph, build_knn, compute_weights, high_dim_edges,
                    load_graph, save_graph)
from .ingest import (CsvSchema, generate_swiss_roll, generate_trajectory,
                     load_csv, standardize)
from .losses import (LossReport, covariance_loss, huber, orientation_loss,
                     rigidity_loss, total_loss)
from .metrics import (MetricsReport, anisotropy_ratios, continuity, evaluate,
                      neighbor_alignment, stress1, trustworthiness)

__all__ = [
    "Adam", "ConfigError", "CsvParseError", "CsvSchema", "DataError",
    "Dataset", "DegenerateDataError", "DegenerateQuaternionError",
    "FitConfig", "FitResult", "GaussianSet", "LossReport", "MetricsReport",
    "NeighborGraph", "NumericalError", "Regime", "SplatmapError",
    "TargetCache", "anisotropy_ratios", "build_covariance", "build_knn",
    "clamp_scales", "compute_weights", "continuity", "covariance_loss",
    "covariance_target", "evaluate", "fit", "generate_swiss_roll",
    "generate_trajectory", "high_dim_edges", "huber", "init_means",
    "init_state", "load_csv", "load_graph", "neighbor_alignment",
    "opacity_map", "orientation_loss", "procrustes_target", "quat_normalize",
    "quat_to_rotation", "read_ply", "read_ply_means", "rigidity_loss",
    "save_graph", "should_update_targets", "spatial_edges", "standardize",
    "stress1", "total_loss", "trustworthiness", "visual_scale_expand",
    "write_ply", "write_report",
]
