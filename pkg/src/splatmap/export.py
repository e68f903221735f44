"""Visualization-phase transforms and artifact output.

Writes the converged state as a binary little-endian PLY in the layout
standard splat viewers expect: 17 float32 properties per vertex
(position, zero normal, SH DC color, opacity logit, log-scales, quaternion
w,x,y,z). The training-phase state is never mutated; visualization
adjustments operate on copies.
"""
from __future__ import annotations

import warnings

import numpy as np

from .core import GaussianSet, Regime
from .errors import ConfigError, DataError
from .losses import LossReport
from .metrics import MetricsReport

SH_DC_SCALE = 0.2820947917738781  # DC spherical-harmonic basis constant
OPACITY_MIN = 0.15
OPACITY_MAX = 0.95
OPACITY_EXPONENT = 1.5
SURFACE_OPACITY = 0.85
SURFACE_SCALE_EXPAND = 0.5

PLY_PROPERTIES = (
    "x", "y", "z", "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
)

# Perceptually-ordered colormap anchors (uniform in [0, 1]); interpolated
# linearly. Fixed table keeps exported colors deterministic and
# dependency-free.
_COLOR_ANCHORS = np.array([
    (0.267004, 0.004874, 0.329415),
    (0.282327, 0.094955, 0.417331),
    (0.278826, 0.175490, 0.483397),
    (0.258965, 0.251537, 0.524736),
    (0.229739, 0.322361, 0.545706),
    (0.199430, 0.387607, 0.554642),
    (0.172719, 0.448791, 0.557885),
    (0.149039, 0.508051, 0.557250),
    (0.127568, 0.566949, 0.550556),
    (0.120638, 0.625828, 0.533488),
    (0.157851, 0.683765, 0.501686),
    (0.246070, 0.738910, 0.452024),
    (0.369214, 0.788888, 0.382914),
    (0.515992, 0.831158, 0.294279),
    (0.678489, 0.863742, 0.189503),
    (0.845561, 0.887322, 0.099702),
    (0.993248, 0.906157, 0.143936),
])


def normalized_energy(energy: np.ndarray) -> np.ndarray:
    """Min-max normalize; a constant vector maps to all-0.5 with a warning."""
    energy = np.asarray(energy, dtype=np.float64)
    lo, hi = float(energy.min()), float(energy.max())
    if hi == lo:
        warnings.warn("energy is constant; using 0.5 everywhere",
                      RuntimeWarning)
        return np.full(energy.shape, 0.5)
    return (energy - lo) / (hi - lo)


def energy_colors(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] through the fixed perceptual colormap."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    pos = v * (len(_COLOR_ANCHORS) - 1)
    i0 = np.minimum(pos.astype(np.int64), len(_COLOR_ANCHORS) - 2)
    frac = (pos - i0)[:, None]
    return _COLOR_ANCHORS[i0] * (1.0 - frac) + _COLOR_ANCHORS[i0 + 1] * frac


def opacity_map(regime: Regime, energy: np.ndarray | None,
                n: int | None = None) -> np.ndarray:
    """Per-point opacities for visualization.

    Trajectory regime: power-law ramp 0.15 + 0.80 E^1.5 over the min-max
    normalized energy, maximizing contrast along the sequence. Surface
    regime: uniform saturation 0.85 (``n`` gives the count when energy is
    absent).
    """
    if regime is Regime.SURFACE:
        count = len(energy) if energy is not None else n
        if count is None:
            raise DataError("surface opacity needs energy or an explicit n")
        return np.full(count, SURFACE_OPACITY)
    if energy is None:
        raise DataError("trajectory regime requires per-sample energy for "
                        "opacity mapping")
    e_hat = normalized_energy(energy)
    return OPACITY_MIN + (OPACITY_MAX - OPACITY_MIN) * e_hat ** OPACITY_EXPONENT


def visual_scale_expand(state: GaussianSet, regime: Regime,
                        delta: float = SURFACE_SCALE_EXPAND) -> GaussianSet:
    """Visualization-phase scale adjustment (copy; training state untouched).

    Surface regime grows every log-scale by ``delta`` so the converged thin
    plates overlap into a closed shell; trajectory regime is returned
    unchanged (its tubes already bridge the sequence).
    """
    out = state.copy()
    if regime is Regime.SURFACE:
        out.log_scales = out.log_scales + delta
    return out


def _ply_header(n: int) -> bytes:
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    lines += [f"property float {p}" for p in PLY_PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_ply(state: GaussianSet, colors: np.ndarray, path) -> None:
    """Write the splat set as a binary little-endian PLY.

    ``colors`` are linear RGB in [0, 1], stored as SH DC coefficients
    (c - 0.5) / 0.2820947917738781; opacity is stored as its logit.
    File size is exactly header + N * 17 * 4 bytes.
    """
    if state.opacities is None:
        raise DataError("opacities must be populated before export")
    n = state.n_gaussians
    colors = np.asarray(colors, dtype=np.float64)
    if colors.shape != (n, 3):
        raise DataError(f"colors must be {n} x 3, got {colors.shape}")

    alpha = state.opacities
    if np.any(alpha <= 0.0) or np.any(alpha >= 1.0):
        warnings.warn("opacities outside (0, 1); clamping before logit",
                      RuntimeWarning)
        alpha = np.clip(alpha, 1e-4, 1.0 - 1e-4)

    rec = np.empty((n, len(PLY_PROPERTIES)), dtype=np.float64)
    rec[:, 0:3] = state.means
    rec[:, 3:6] = 0.0
    rec[:, 6:9] = (colors - 0.5) / SH_DC_SCALE
    rec[:, 9] = np.log(alpha / (1.0 - alpha))
    rec[:, 10:13] = state.log_scales
    rec[:, 13:17] = state.quaternions
    with open(path, "wb") as fh:
        fh.write(_ply_header(n))
        fh.write(rec.astype("<f4").tobytes())


def read_ply(path) -> dict[str, np.ndarray]:
    """Parse a binary little-endian PLY with all-float32 vertex properties.

    Returns one float32 array per property. Handles the files written by
    :func:`write_ply` and any viewer-compatible variant with the same
    encoding.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise DataError(f"not a PLY file: {path}")
    header = blob[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise DataError("only binary little-endian PLY is supported")
    n = None
    props = []
    for line in header:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "property":
            if parts[1] != "float":
                raise DataError(f"unsupported property type {parts[1]!r}")
            props.append(parts[2])
    if n is None or not props:
        raise DataError("PLY header lacks a vertex element")
    body = blob[end + len(b"end_header\n"):]
    expected = n * len(props) * 4
    if len(body) != expected:
        raise DataError(f"PLY body has {len(body)} bytes, expected {expected}")
    table = np.frombuffer(body, dtype="<f4").reshape(n, len(props))
    return {name: table[:, i].copy() for i, name in enumerate(props)}


def read_ply_means(path) -> np.ndarray:
    """Extract the N x 3 positions from an exported splat file."""
    fields = read_ply(path)
    for axis in ("x", "y", "z"):
        if axis not in fields:
            raise DataError(f"PLY lacks a {axis!r} property")
    return np.stack([fields["x"], fields["y"], fields["z"]],
                    axis=1).astype(np.float64)


def relative_stress_delta(init: float, final: float,
                          floor: float = 1e-6) -> float:
    """Relative Stress-1 change from init, as a fraction.

    When the initial embedding is already distance-perfect (stress below
    ``floor``, e.g. a PCA init of intrinsically 3D data) the ratio is
    meaningless, so the absolute change is returned instead; it is on the
    same [0, 1] scale as stress itself.
    """
    if init > floor:
        return (final - init) / init
    return final - init


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (int, float, np.floating)) else str(x)


def write_report(result, metrics_init: MetricsReport,
                 metrics_final: MetricsReport, path) -> None:
    """Write the line-oriented run report (config echo, metric rows, stress
    delta, loss history summary). Content is byte-deterministic for a
    deterministic fit."""
    if metrics_init.k != metrics_final.k:
        raise ConfigError(f"metric reports use different k: "
                          f"{metrics_init.k} vs {metrics_final.k}")
    lines = ["# splatmap fit report", "", "[config]"]
    for key, value in sorted(result.config.to_dict().items()):
        lines.append(f"{key} = {_fmt(value)}")
    lines += ["", "[metrics]",
              "phase stress1 trustworthiness continuity k n_pairs_used"]
    for phase, m in (("init", metrics_init), ("final", metrics_final)):
        lines.append(f"{phase} {m.stress1!r} {m.trustworthiness!r} "
                     f"{m.continuity!r} {m.k} {m.n_pairs_used}")
    delta = relative_stress_delta(metrics_init.stress1, metrics_final.stress1)
    lines.append(f"stress1_rel_delta_pct = {delta * 100.0!r}")
    lines += ["", "[loss]"]
    hist: list[LossReport] = result.history
    lines.append(f"epochs = {len(hist)}")
    if hist:
        lines.append(f"l_total_first = {hist[0].l_total!r}")
        lines.append(f"l_total_final = {hist[-1].l_total!r}")
        lines.append(f"l_total_min = {min(h.l_total for h in hist)!r}")
        for name in ("l_r", "l_c", "l_o"):
            lines.append(f"{name}_first = {getattr(hist[0], name)!r}")
            lines.append(f"{name}_final = {getattr(hist[-1], name)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
