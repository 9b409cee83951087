"""Ensemble evaluation, convergence rounds and result tables."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .models import ModelSpec, forward_probs

CSV_HEADER = ["round", "algo", "seed", "test_acc", "per_model_acc", "uplink_bytes", "lr", "wall_ms"]
SUMMARY_HEADER = ["algo", "runs", "final_acc_mean", "final_acc_std", "best_acc_mean",
                  "best_acc_std", "threshold", "conv_rounds_mean", "nc_count"]
NOT_CONVERGED = None


def ensemble_probs(spec: ModelSpec, submodels: Sequence[np.ndarray], inputs) -> np.ndarray:
    if len(submodels) == 0:
        raise ValueError("ensemble has no submodels")
    total = forward_probs(spec, submodels[0], inputs)
    for params in submodels[1:]:
        total = total + forward_probs(spec, params, inputs)
    return total / len(submodels)


def ensemble_predict(spec: ModelSpec, submodels: Sequence[np.ndarray], inputs) -> np.ndarray:
    """Average the softmax outputs of all submodels, then take the argmax.

    ``np.argmax`` returns the first maximum, so ties go to the lowest class.
    """
    return np.argmax(ensemble_probs(spec, submodels, inputs), axis=1)


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"length mismatch {predictions.shape} vs {labels.shape}")
    if len(labels) == 0:
        raise ValueError("no samples")
    return float(np.mean(predictions == labels))


def convergence_rounds(acc_series: Sequence[float], threshold: float) -> Optional[int]:
    """1-based index of the first round reaching ``threshold``, else None."""
    if len(acc_series) == 0:
        raise ValueError("empty accuracy series")
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    hits = np.flatnonzero(np.asarray(acc_series) >= threshold)
    return int(hits[0]) + 1 if len(hits) else NOT_CONVERGED


@dataclass
class MetricRow:
    round: int
    algo: str
    seed: int
    test_acc: float
    per_model_acc: list = field(default_factory=list)
    uplink_bytes: int = 0
    lr: float = 0.0
    wall_ms: int = 0

    def __post_init__(self):
        for a in [self.test_acc, *self.per_model_acc]:
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"accuracy {a} outside [0, 1]")

    def to_record(self) -> list[str]:
        return [
            str(self.round), self.algo, str(self.seed), f"{self.test_acc:.6f}",
            ";".join(f"{a:.6f}" for a in self.per_model_acc),
            str(self.uplink_bytes), f"{self.lr:.6f}", str(self.wall_ms),
        ]


def format_metrics_csv(rows: Sequence[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.to_record())
    return buf.getvalue()


def write_metrics_csv(path, rows: Sequence[MetricRow]) -> None:
    Path(path).write_bytes(format_metrics_csv(rows).encode("utf-8"))


def read_metrics_csv(path) -> list[MetricRow]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"bad metrics header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ValueError(f"line {lineno}: expected {len(CSV_HEADER)} fields")
            try:
                rows.append(MetricRow(
                    round=int(rec[0]), algo=rec[1], seed=int(rec[2]),
                    test_acc=float(rec[3]),
                    per_model_acc=[float(x) for x in rec[4].split(";") if x],
                    uplink_bytes=int(rec[5]), lr=float(rec[6]), wall_ms=int(rec[7]),
                ))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return rows


def _runs(rows):
    runs = defaultdict(list)
    for r in rows:
        runs[(r.algo, r.seed)].append(r)
    for series in runs.values():
        series.sort(key=lambda r: r.round)
    return runs


def summarize(rows: Sequence[MetricRow], threshold: float) -> list[dict]:
    """Per algorithm: mean/std (population) of final and best accuracy,
    and mean convergence round over the runs that converged."""
    by_algo = defaultdict(list)
    for (algo, _seed), series in sorted(_runs(rows).items()):
        acc = [r.test_acc for r in series]
        by_algo[algo].append((acc[-1], max(acc), convergence_rounds(acc, threshold)))
    out = []
    for algo, runs in by_algo.items():
        final = np.array([r[0] for r in runs])
        best = np.array([r[1] for r in runs])
        conv = [r[2] for r in runs if r[2] is not NOT_CONVERGED]
        out.append({
            "algo": algo, "runs": len(runs),
            "final_acc_mean": final.mean(), "final_acc_std": final.std(),
            "best_acc_mean": best.mean(), "best_acc_std": best.std(),
            "threshold": threshold,
            "conv_rounds_mean": float(np.mean(conv)) if conv else "nc",
            "nc_count": len(runs) - len(conv),
        })
    return out


def write_summary_csv(path, summary: Sequence[dict]) -> None:
    def fmt(v):
        return f"{v:.6f}" if isinstance(v, float) else str(v)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summary:
        w.writerow([fmt(s[k]) for k in SUMMARY_HEADER])
    Path(path).write_bytes(buf.getvalue().encode("utf-8"))


def curve_stats(rows: Sequence[MetricRow]) -> dict[str, np.ndarray]:
    """Per algorithm, an array of (round, mean_acc, std_acc) over seeds."""
    curves = defaultdict(lambda: defaultdict(list))
    for r in rows:
        curves[r.algo][r.round].append(r.test_acc)
    out = {}
    for algo, by_round in curves.items():
        out[algo] = np.array([(rnd, np.mean(v), np.std(v)) for rnd, v in sorted(by_round.items())])
    return out


def emit_plot_data(metrics_csv, out_dir) -> list[Path]:
    """Write ``plot_<algo>.dat`` files of round, mean and std accuracy."""
    out_dir = Path(out_dir)
    paths = []
    for algo, table in sorted(curve_stats(read_metrics_csv(metrics_csv)).items()):
        path = out_dir / f"plot_{algo}.dat"
        lines = ["# round mean_acc std_acc"]
        lines += [f"{int(r)} {m:.6f} {s:.6f}" for r, m, s in table]
        path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
        paths.append(path)
    return paths
