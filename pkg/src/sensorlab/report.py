"""Render run artifacts to figures: target-vs-prediction overlay, per-point
accuracy, neuron-sweep curves and the coefficient-tuning trace.

Figures are written next to the delimited outputs in the run directory.
Missing artifacts are skipped, so a partial run still reports what it has.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

DPI = 150


def _read_csv_columns(path: Path) -> dict[str, list[str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        columns: dict[str, list[str]] = {name: [] for name in reader.fieldnames or []}
        for row in reader:
            for name, value in row.items():
                columns[name].append(value)
    return columns


def render_predictions(run_dir: Path, out_dir: Path) -> list[Path]:
    source = run_dir / "predictions.csv"
    if not source.exists():
        return []
    cols = _read_csv_columns(source)
    idx = [int(v) for v in cols["index"]]
    target = [float(v) for v in cols["target"]]
    pred = [float(v) for v in cols["prediction"]]
    acc = [float(v) for v in cols["accuracy"]]

    overlay = out_dir / "predictions_overlay.png"
    fig, ax = plt.subplots(figsize=(9, 4.5))
    ax.plot(idx, target, color="tab:blue", linewidth=0.8, label="target")
    ax.plot(idx, pred, color="tab:red", linewidth=0.8, alpha=0.75, label="prediction")
    ax.set_xlabel("sample index")
    ax.set_ylabel("value")
    ax.set_title("Target vs predicted virtual-sensor output")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(overlay, dpi=DPI)
    plt.close(fig)

    accuracy = out_dir / "accuracy.png"
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(idx, acc, color="tab:green", linewidth=0.7)
    ax.axhline(99.0, color="tab:gray", linestyle="--", linewidth=1.0, label="99 % threshold")
    ax.set_xlabel("sample index")
    ax.set_ylabel("accuracy [%]")
    ax.set_ylim(min(95.0, min(acc) - 0.5), 100.5)
    ax.set_title("Per-point prediction accuracy")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(accuracy, dpi=DPI)
    plt.close(fig)
    return [overlay, accuracy]


def render_sweep(run_dir: Path, out_dir: Path) -> list[Path]:
    source = run_dir / "sweep.csv"
    if not source.exists():
        return []
    cols = _read_csv_columns(source)
    by_set: dict[int, tuple[list[int], list[float], list[float]]] = {}
    for set_id, n, perf, count, flags in zip(cols["set"], cols["n"], cols["perf"],
                                             cols["countPercent"], cols["flags"]):
        if flags:
            continue
        ns, perfs, counts = by_set.setdefault(int(set_id), ([], [], []))
        ns.append(int(n))
        perfs.append(float(perf))
        counts.append(float(count))

    path = out_dir / "sweep.png"
    fig, (ax_perf, ax_count) = plt.subplots(2, 1, figsize=(9, 7), sharex=True)
    for set_id in sorted(by_set):
        ns, perfs, counts = by_set[set_id]
        ax_perf.plot(ns, perfs, marker="o", markersize=3, label=f"set {set_id}")
        ax_count.plot(ns, counts, marker="o", markersize=3, label=f"set {set_id}")
    ax_perf.set_yscale("log")
    ax_perf.set_ylabel("perf (MSE)")
    ax_perf.set_title("Neuron sweep per configured set")
    ax_perf.legend(ncol=3, fontsize=8)
    ax_count.set_xlabel("hidden neurons")
    ax_count.set_ylabel("countPercent [%]")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return [path]


def render_awb(run_dir: Path, out_dir: Path) -> list[Path]:
    source = run_dir / "awb_trace.json"
    if not source.exists():
        return []
    with open(source, "r", encoding="utf-8") as fh:
        traces = json.load(fh)
    if not traces:
        return []
    path = out_dir / "awb_trace.png"
    ncols = min(2, len(traces))
    nrows = math.ceil(len(traces) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.5 * ncols, 3.8 * nrows), squeeze=False)
    for ax in axes.ravel()[len(traces):]:
        ax.set_visible(False)
    for ax, trace in zip(axes.ravel(), traces):
        for iteration in trace["iterations"]:
            points = [(e["coefficient"], e["metrics"]["perf"])
                      for e in iteration["evaluations"] if not e["failed"]]
            if not points:
                continue
            xs, ys = zip(*sorted(points))
            ax.plot(xs, ys, marker=".", markersize=3, linewidth=0.6,
                    label=f"pass {iteration['iteration']}")
        ax.axvline(trace["finalCoefficient"], color="tab:red", linestyle="--",
                   linewidth=1.0, label="final")
        ax.set_yscale("log")
        ax.set_title(f"{trace['quantity']} "
                     f"({'accepted' if trace['accepted'] else 'kept original'})")
        ax.set_xlabel("coefficient")
        ax.set_ylabel("perf (MSE)")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return [path]


def render_run(run_dir, out_dir=None) -> list[Path]:
    """Render every available figure for a run directory; returns written paths."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    written += render_predictions(run_dir, out_dir)
    written += render_sweep(run_dir, out_dir)
    written += render_awb(run_dir, out_dir)
    return written
