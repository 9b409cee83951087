"""Command-line experiment runner.

    python -m shefl --config exp.toml --out results/ [--algo fedavg] [--seeds 1,2,3]
                    [--data-dir ~/data/mnist] [--trace] [--plot-data] [--force]

Writes ``metrics.csv`` and ``summary.csv`` to the output directory, plus
``trace.bin`` with ``--trace`` and ``plot_<algo>.dat`` with ``--plot-data``.
``SHEFL_THREADS`` caps the worker threads used for local training.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .core import derive_stream
from .data import IdxError, generate_blobs, load_mnist
from .federation import run_algorithm
from .metrics import emit_plot_data, summarize, write_metrics_csv, write_summary_csv


def build_datasets(cfg: ExperimentConfig, data_dir=None):
    """Train/test datasets for ``cfg``; blobs come from ``data_seed``."""
    if cfg.dataset == "blobs":
        b = cfg.blobs
        return generate_blobs(b.num_classes, b.input_dim, b.n_train, b.n_test, b.class_sep,
                              derive_stream(cfg.effective_data_seed, "blobs"))
    if data_dir is None:
        raise FileNotFoundError(f"dataset {cfg.dataset!r} needs --data-dir")
    return load_mnist(data_dir, cfg.data.overrides())


def run_experiment(cfg: ExperimentConfig, out_dir, data_dir=None, trace=False,
                   plot_data=False, workers=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = build_datasets(cfg, data_dir)
    rows = []
    trace_file = open(out / "trace.bin", "wb") if trace else None
    try:
        for algo in cfg.algo:
            rows += run_algorithm(algo, cfg, datasets, workers=workers, trace=trace_file)
    finally:
        if trace_file is not None:
            trace_file.close()
    write_metrics_csv(out / "metrics.csv", rows)
    write_summary_csv(out / "summary.csv", summarize(rows, cfg.effective_threshold))
    if plot_data:
        emit_plot_data(out / "metrics.csv", out)
    return rows


def _seed_list(text: str):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shefl", description="Federated ensemble simulator")
    p.add_argument("--config", help="TOML-subset config file (default: built-in defaults)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--data-dir", help="directory holding IDX dataset files")
    p.add_argument("--algo", help="algorithm override, comma separated")
    p.add_argument("--seeds", type=_seed_list, help="seed list override, e.g. 1,2,3")
    p.add_argument("--trace", action="store_true", help="write per-upload trace.bin")
    p.add_argument("--plot-data", action="store_true", help="write per-algo accuracy curves")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty --out")
    p.add_argument("--workers", type=int, help="worker threads (overrides SHEFL_THREADS)")
    return p


def apply_overrides(cfg: ExperimentConfig, algo=None, seeds=None) -> ExperimentConfig:
    changes = {}
    if algo:
        changes["algo"] = tuple(a.strip() for a in algo.split(",") if a.strip())
    if seeds:
        changes["seeds"] = seeds
    return cfg.replace(**changes) if changes else cfg


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
        cfg = apply_overrides(cfg, args.algo, args.seeds)
        out = Path(args.out)
        if out.exists() and any(out.iterdir()) and not args.force:
            raise FileExistsError(f"{out} is not empty; pass --force to reuse it")
        run_experiment(cfg, out, args.data_dir, args.trace, args.plot_data, args.workers)
    except (ConfigError, IdxError, OSError) as exc:
        print(f"shefl: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_cli())
