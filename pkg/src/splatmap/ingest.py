"""Data loading and synthetic benchmark generation.

Two generator families back the acceptance benchmarks: a Swiss Roll
(intrinsic 2D surface in 3D) and a helix lifted isometrically into R^n
(intrinsic 1D trajectory). Both are bit-reproducible for a fixed seed.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset
from .errors import CsvParseError, DataError, DegenerateDataError

SWISS_ROLL_T_MIN = 1.5 * np.pi
SWISS_ROLL_T_MAX = 4.5 * np.pi
SWISS_ROLL_HEIGHT = 21.0


@dataclass
class CsvSchema:
    """Column routing for CSV input.

    Columns are referenced by header name (``has_header=True``) or by
    0-based index.
    """

    feature_columns: list = field(default_factory=list)
    energy_column: object = None
    label_column: object = None
    delimiter: str = ","
    has_header: bool = False

    def __post_init__(self):
        if not self.feature_columns:
            raise DataError("feature_columns must be non-empty")
        if len(self.delimiter) != 1:
            raise DataError("delimiter must be a single character")
        extras = [c for c in (self.energy_column, self.label_column)
                  if c is not None]
        if any(c in self.feature_columns for c in extras):
            raise DataError("energy/label columns must be disjoint from "
                            "feature columns")


def _resolve_column(col, header: list[str] | None, n_cols: int) -> int:
    if isinstance(col, str):
        if header is None:
            raise CsvParseError("bad-column",
                                f"named column {col!r} requires a header row")
        if col not in header:
            raise CsvParseError("bad-column", f"column {col!r} not in header")
        return header.index(col)
    idx = int(col)
    if not 0 <= idx < n_cols:
        raise CsvParseError("bad-column",
                            f"column index {idx} out of range 0..{n_cols - 1}")
    return idx


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Parse a CSV file into a Dataset according to ``schema``.

    Raises CsvParseError with 1-based row/column location on missing file,
    empty file, ragged rows, or non-numeric cells.
    """
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh, delimiter=schema.delimiter))
    except FileNotFoundError:
        raise CsvParseError("missing-file", f"no such file: {path}") from None

    header = None
    start = 0
    if schema.has_header:
        if not rows:
            raise CsvParseError("empty", f"file has no header row: {path}")
        header = [c.strip() for c in rows[0]]
        start = 1
    data_rows = rows[start:]
    if not data_rows:
        raise CsvParseError("empty", f"file has no data rows: {path}")

    n_cols = len(data_rows[0]) if header is None else len(header)
    feat_idx = [_resolve_column(c, header, n_cols)
                for c in schema.feature_columns]
    energy_idx = (None if schema.energy_column is None
                  else _resolve_column(schema.energy_column, header, n_cols))
    label_idx = (None if schema.label_column is None
                 else _resolve_column(schema.label_column, header, n_cols))

    def cell(row_cells, line_no, col):
        text = row_cells[col].strip()
        try:
            return float(text)
        except ValueError:
            raise CsvParseError("non-numeric",
                                f"cannot parse {text!r} as a number",
                                row=line_no, column=col + 1) from None

    points = np.empty((len(data_rows), len(feat_idx)), dtype=np.float64)
    energy = np.empty(len(data_rows)) if energy_idx is not None else None
    labels = np.empty(len(data_rows), dtype=np.int64) \
        if label_idx is not None else None
    for r, row_cells in enumerate(data_rows):
        line_no = r + start + 1  # 1-based physical line number
        if len(row_cells) != n_cols:
            raise CsvParseError(
                "ragged-row",
                f"expected {n_cols} cells, found {len(row_cells)}",
                row=line_no)
        for j, col in enumerate(feat_idx):
            points[r, j] = cell(row_cells, line_no, col)
        if energy_idx is not None:
            energy[r] = cell(row_cells, line_no, energy_idx)
        if label_idx is not None:
            labels[r] = int(cell(row_cells, line_no, label_idx))

    return Dataset(points, energy=energy, labels=labels,
                   name=os.path.basename(str(path)))


def generate_swiss_roll(N: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Swiss Roll surface: (t cos t, h, t sin t), t in [1.5pi, 4.5pi].

    ``energy`` is the unrolled coordinate t, min-max normalized over its
    range. Draw order (t, h, then noise) is fixed for reproducibility.
    """
    if N < 10:
        raise DataError(f"swiss roll needs N >= 10, got {N}")
    if noise < 0:
        raise DataError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    t = rng.uniform(SWISS_ROLL_T_MIN, SWISS_ROLL_T_MAX, N)
    h = rng.uniform(0.0, SWISS_ROLL_HEIGHT, N)
    points = np.stack([t * np.cos(t), h, t * np.sin(t)], axis=1)
    if noise > 0:
        points = points + noise * rng.standard_normal((N, 3))
    energy = (t - SWISS_ROLL_T_MIN) / (SWISS_ROLL_T_MAX - SWISS_ROLL_T_MIN)
    return Dataset(points, energy=energy, name=f"swiss-roll-{N}")


def generate_trajectory(N: int, n: int, turns: float = 3.0,
                        noise: float = 0.0, seed: int = 0) -> Dataset:
    """1D helix lifted into R^n by a random orthonormal map.

    The helix (cos th, sin th, c th) is traversed at uniform angular (hence
    arc-length) increments, so consecutive indices are curve-adjacent. The
    lift preserves all pairwise distances exactly; noise is added in R^n.
    ``energy`` is sin^2(pi u) of the normalized curve parameter u.
    """
    if N < 10:
        raise DataError(f"trajectory needs N >= 10, got {N}")
    if n < 3:
        raise DataError(f"ambient dimension must be >= 3, got {n}")
    if noise < 0:
        raise DataError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    theta = np.linspace(0.0, 2.0 * np.pi * turns, N)
    pitch = 0.5 / (2.0 * np.pi)  # height gained per radian
    curve = np.stack([np.cos(theta), np.sin(theta), pitch * theta], axis=1)

    basis = rng.standard_normal((n, 3))
    Q, R = np.linalg.qr(basis)
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)  # fix QR sign ambiguity
    points = curve @ Q.T
    if noise > 0:
        points = points + noise * rng.standard_normal((N, n))
    u = np.linspace(0.0, 1.0, N)
    energy = np.sin(np.pi * u) ** 2
    return Dataset(points, energy=energy, name=f"helix-{N}-d{n}")


def standardize(d: Dataset) -> Dataset:
    """Center features and rescale so the mean row norm is 1.

    A similarity transform: pairwise distance ratios are preserved. The
    applied map is recorded in the dataset name.
    """
    if d.n_samples < 2:
        raise DataError("standardize needs at least 2 samples")
    centered = d.points - d.points.mean(axis=0)
    scale = np.linalg.norm(centered, axis=1).mean()
    if scale == 0.0:
        raise DegenerateDataError("all points identical; nothing to scale")
    return Dataset(centered / scale, energy=d.energy, labels=d.labels,
                   name=f"{d.name}|standardized(1/{scale!r})")
