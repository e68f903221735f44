"""Command-line orchestration: generate, fit, ablate, metrics.

Every run writes a JSON manifest with the fully resolved configuration;
re-running a manifest reproduces the PLY/report/log outputs byte for byte.
Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset, FitConfig, Regime
from .engine import FitResult, fit
from .errors import ConfigError, DataError, NumericalError, SplatmapError
from .export import energy_colors, normalized_energy, opacity_map, \
    read_ply_means, relative_stress_delta, visual_scale_expand, write_ply, \
    write_report
from .graph import load_graph, save_graph
from .ingest import CsvSchema, generate_swiss_roll, generate_trajectory, \
    load_csv
from .metrics import evaluate

THREADS_ENV_VAR = "SPLATMAP_THREADS"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code contract."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="splatmap",
                     description="Project high-dimensional data onto "
                                 "optimized anisotropic 3D Gaussian splats.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic benchmark CSV")
    gen.add_argument("kind", choices=["swiss-roll", "trajectory"])
    gen.add_argument("--n", type=int, default=2000, help="sample count")
    gen.add_argument("--dim", type=int, default=10,
                     help="ambient dimension (trajectory only)")
    gen.add_argument("--turns", type=float, default=3.0,
                     help="helix turns (trajectory only)")
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output CSV path")

    def add_fit_flags(p):
        p.add_argument("input", help="input CSV")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--config", help="key=value config file or a "
                                        "manifest.json from a previous run")
        p.add_argument("--regime", choices=["surface", "trajectory"])
        p.add_argument("--k", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--tau", type=int, dest="lazy_interval")
        p.add_argument("--freeze-epoch", type=int, dest="freeze_epoch")
        p.add_argument("--lambda-r", type=float, dest="lambda_r")
        p.add_argument("--lambda-c", type=float, dest="lambda_c")
        p.add_argument("--lambda-o", type=float, dest="lambda_o")
        p.add_argument("--huber-beta", type=float, dest="huber_beta")
        p.add_argument("--seed", type=int)
        p.add_argument("--s-init", type=float, dest="s_init")
        p.add_argument("--kernel-sigma", type=float, dest="kernel_sigma",
                       help="fixed kernel bandwidth (default: adaptive)")
        p.add_argument("--init", default=None,
                       help="'pca3' or a path to an N x 3 CSV embedding")
        p.add_argument("--no-standardize", action="store_true",
                       help="skip centering/rescaling of the input")
        p.add_argument("--threads", type=int,
                       help=f"cap BLAS thread pools (default: "
                            f"${THREADS_ENV_VAR} or library default)")
        p.add_argument("--graph-cache",
                       help="binary sidecar to reuse/store the k-NN graph")
        # CSV schema controls shared with `metrics`
        p.add_argument("--no-header", action="store_true")
        p.add_argument("--delimiter", default=",")
        p.add_argument("--energy-col", default="energy")
        p.add_argument("--label-col", default="label")

    fit_p = sub.add_parser("fit", help="optimize splats for a dataset")
    add_fit_flags(fit_p)

    abl = sub.add_parser("ablate", help="run full / no-covariance / "
                                        "no-orientation variants")
    add_fit_flags(abl)

    met = sub.add_parser("metrics", help="score an embedding against "
                                         "high-dimensional data")
    met.add_argument("high", help="high-dimensional CSV")
    met.add_argument("low", help="embedding: exported PLY or 3-column CSV")
    met.add_argument("--k", type=int, default=15)
    met.add_argument("--raw-stress", action="store_true",
                     help="skip the optimal uniform scale in Stress-1")
    met.add_argument("--no-header", action="store_true")
    met.add_argument("--delimiter", default=",")
    met.add_argument("--energy-col", default="energy")
    met.add_argument("--label-col", default="label")
    return parser


def _load_dataset(path, args) -> Dataset:
    """Load a CSV using the shared schema flags.

    With a header row, columns named by --energy-col/--label-col are routed
    to their fields and the rest become features; without one, every column
    is a feature.
    """
    if args.no_header:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
        n_cols = len(first.split(args.delimiter)) if first else 0
        if n_cols == 0:
            from .errors import CsvParseError
            raise CsvParseError("empty", f"file has no data rows: {path}")
        schema = CsvSchema(feature_columns=list(range(n_cols)),
                           delimiter=args.delimiter, has_header=False)
    else:
        with open(path, "r", encoding="utf-8") as fh:
            header = [c.strip() for c in fh.readline().rstrip("\n")
                      .split(args.delimiter)]
        features = [c for c in header
                    if c not in (args.energy_col, args.label_col)]
        schema = CsvSchema(
            feature_columns=features,
            energy_column=args.energy_col if args.energy_col in header else None,
            label_column=args.label_col if args.label_col in header else None,
            delimiter=args.delimiter, has_header=True)
    try:
        return load_csv(path, schema)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None


_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False}


def _coerce_config_value(key: str, text: str):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    if key == "regime":
        return text
    if key in ("kernel_sigma_mode", "init_strategy", "init_path"):
        return text
    if key in ("det_sign_correction", "normalize_rigidity", "standardize"):
        lowered = text.lower()
        if lowered not in _BOOL_STRINGS:
            raise ConfigError(f"cannot parse boolean {text!r} for {key}")
        return _BOOL_STRINGS[lowered]
    if key in ("k", "epochs", "lazy_interval", "freeze_epoch", "seed"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"cannot parse integer {text!r} for {key}") \
                from None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse number {text!r} for {key}") from None


def load_config_file(path) -> dict:
    """Read a flat key=value config file, or the config block of a manifest."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    if p.suffix == ".json":
        payload = json.loads(p.read_text(encoding="utf-8"))
        return payload.get("config", payload)
    entries = {}
    for ln, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln} of {path} is not key=value: "
                              f"{stripped!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = _coerce_config_value(key.strip(), value)
    return entries


def _resolve_config(args) -> FitConfig:
    settings = FitConfig().to_dict()
    if args.config:
        file_conf = load_config_file(args.config)
        for key, value in file_conf.items():
            if key not in settings:
                raise ConfigError(f"unknown config key {key!r} in "
                                  f"{args.config}")
            settings[key] = value
    for key in ("regime", "k", "epochs", "lazy_interval", "freeze_epoch",
                "lambda_r", "lambda_c", "lambda_o", "huber_beta", "seed",
                "s_init", "kernel_sigma"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "kernel_sigma", None) is not None:
        settings["kernel_sigma_mode"] = "fixed"
    if getattr(args, "init", None) is not None:
        if args.init == "pca3":
            settings["init_strategy"] = "pca3"
            settings["init_path"] = None
        else:
            settings["init_strategy"] = "external"
            settings["init_path"] = args.init
    if getattr(args, "no_standardize", False):
        settings["standardize"] = False
    cfg = FitConfig.from_dict(settings)
    cfg.validate()
    return cfg


def _resolve_threads(args) -> int | None:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, "
                              f"got {env!r}") from None
    return None


def _thread_context(threads: int | None):
    if threads is None:
        import contextlib
        return contextlib.nullcontext()
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def _write_manifest(path, subcommand: str, cfg: FitConfig, input_path,
                    out_dir, outputs: dict, threads) -> None:
    manifest = {
        "tool": "splatmap",
        "version": __version__,
        "subcommand": subcommand,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "input": str(input_path),
        "out_dir": str(out_dir),
        "outputs": outputs,
        "threads": threads,
        "config": cfg.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _f32(a: np.ndarray) -> np.ndarray:
    """Quantize to float32 precision; metrics in reports describe the
    artifact actually written to disk."""
    return a.astype(np.float32).astype(np.float64)


def _splat_colors(dataset: Dataset, n: int) -> np.ndarray:
    if dataset.energy is not None:
        return energy_colors(normalized_energy(dataset.energy))
    return np.full((n, 3), 0.5)


def _run_fit_pipeline(dataset: Dataset, cfg: FitConfig, out_dir: Path,
                      graph_cache=None):
    """Fit + metrics + artifacts; shared by cmd_fit and cmd_ablate."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.regime is Regime.TRAJECTORY and dataset.energy is None:
        raise DataError("trajectory regime requires an energy column for "
                        "opacity mapping")

    graph = None
    if graph_cache and Path(graph_cache).exists():
        graph = load_graph(graph_cache)
        if graph.n_points != dataset.n_samples or graph.k != cfg.k:
            raise DataError(f"graph cache {graph_cache} does not match "
                            f"(N, k) = ({dataset.n_samples}, {cfg.k})")

    log_path = out_dir / "training_log.txt"
    if log_path.exists():
        log_path.unlink()  # fit appends; start each run fresh
    result = fit(dataset, cfg, graph=graph, log_path=log_path)
    if graph_cache and not Path(graph_cache).exists():
        save_graph(result.graph, graph_cache)

    metrics_init = evaluate(dataset.points, _f32(result.init_means), cfg.k)
    metrics_final = evaluate(dataset.points, _f32(result.gaussians.means),
                             cfg.k)

    visual = visual_scale_expand(result.gaussians, cfg.regime)
    visual.opacities = opacity_map(cfg.regime, dataset.energy,
                                   n=dataset.n_samples)
    ply_path = out_dir / "splats.ply"
    write_ply(visual, _splat_colors(dataset, dataset.n_samples), ply_path)
    report_path = out_dir / "report.txt"
    write_report(result, metrics_init, metrics_final, report_path)
    return result, metrics_init, metrics_final


def cmd_generate(args) -> int:
    if args.kind == "swiss-roll":
        d = generate_swiss_roll(args.n, noise=args.noise, seed=args.seed)
    else:
        d = generate_trajectory(args.n, args.dim, turns=args.turns,
                                noise=args.noise, seed=args.seed)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    header = [f"x{i}" for i in range(d.n_features)] + ["energy"]
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row, e in zip(d.points, d.energy):
            fh.write(",".join(repr(float(v)) for v in row)
                     + f",{float(e)!r}\n")
    print(f"wrote {d.n_samples} samples ({d.n_features} features + energy) "
          f"to {out}")
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    threads = _resolve_threads(args)
    dataset = _load_dataset(args.input, args)
    out_dir = Path(args.out_dir)
    with _thread_context(threads):
        result, m_init, m_final = _run_fit_pipeline(
            dataset, cfg, out_dir, graph_cache=args.graph_cache)
    _write_manifest(out_dir / "manifest.json", "fit", cfg, args.input,
                    out_dir, {"ply": "splats.ply", "report": "report.txt",
                              "log": "training_log.txt"}, threads)
    delta = relative_stress_delta(m_init.stress1, m_final.stress1)
    print(f"fit: {dataset.n_samples} points, {len(result.history)} epochs, "
          f"wall {result.wall_time:.2f}s")
    print(f"final: stress1={m_final.stress1:.6f} "
          f"trustworthiness={m_final.trustworthiness:.6f} "
          f"continuity={m_final.continuity:.6f} "
          f"stress_delta={delta * 100.0:+.4f}%")
    return 0


ABLATION_VARIANTS = (
    ("full", {}),
    ("no-covariance", {"lambda_c": 0.0}),
    ("no-orientation", {"lambda_o": 0.0}),
)


def cmd_ablate(args) -> int:
    from .metrics import anisotropy_ratios, neighbor_alignment

    cfg = _resolve_config(args)
    threads = _resolve_threads(args)
    dataset = _load_dataset(args.input, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    with _thread_context(threads):
        for name, overrides in ABLATION_VARIANTS:
            variant_cfg = cfg.replace(**overrides)
            result, m_init, m_final = _run_fit_pipeline(
                dataset, variant_cfg, out_dir / name)
            aniso = float(np.median(anisotropy_ratios(result.gaussians)))
            align = neighbor_alignment(result.gaussians, result.graph)
            rows.append((name, aniso, align, m_final))
            _write_manifest(out_dir / name / "manifest.json", "ablate",
                            variant_cfg, args.input, out_dir / name,
                            {"ply": "splats.ply", "report": "report.txt",
                             "log": "training_log.txt"}, threads)

    lines = ["# splatmap ablation report", "",
             "variant median_anisotropy_ratio mean_neighbor_alignment "
             "stress1 trustworthiness continuity"]
    for name, aniso, align, m in rows:
        lines.append(f"{name} {aniso!r} {align!r} {m.stress1!r} "
                     f"{m.trustworthiness!r} {m.continuity!r}")
    by_name = {r[0]: r for r in rows}
    lines += ["",
              f"anisotropy_full_over_no_covariance = "
              f"{by_name['full'][1] / by_name['no-covariance'][1]!r}",
              f"alignment_full_minus_no_orientation = "
              f"{by_name['full'][2] - by_name['no-orientation'][2]!r}"]
    report = out_dir / "ablation.txt"
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    return 0


def cmd_metrics(args) -> int:
    high = _load_dataset(args.high, args)
    low_path = Path(args.low)
    if low_path.suffix.lower() == ".ply":
        low = read_ply_means(low_path)
    else:
        class _PlainArgs:
            no_header = True
            delimiter = args.delimiter
            energy_col = None
            label_col = None
        low = _load_dataset(args.low, _PlainArgs).points
        if low.shape[1] != 3:
            raise DataError(f"embedding CSV must have 3 columns, "
                            f"got {low.shape[1]}")
    report = evaluate(high.points, low, args.k,
                      optimal_scale=not args.raw_stress)
    print(f"stress1={report.stress1!r}")
    print(f"trustworthiness={report.trustworthiness!r}")
    print(f"continuity={report.continuity!r}")
    print(f"k={report.k} n_pairs_used={report.n_pairs_used}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "ablate":
            return cmd_ablate(args)
        return cmd_metrics(args)
    except ConfigError as exc:
        _report_error("usage", exc)
        return 1
    except DataError as exc:
        _report_error("data", exc)
        return 2
    except NumericalError as exc:
        _report_error("numerical", exc)
        return 3
    except SplatmapError as exc:  # base-class fallback
        _report_error("internal", exc)
        return 3


def _report_error(category: str, exc: Exception) -> None:
    print(f"error category={category} message={json.dumps(str(exc))}",
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
