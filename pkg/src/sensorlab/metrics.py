"""The four performance parameters used throughout the pipeline.

perf          mean squared error over the full dataset (squared target units)
countPercent  share of points predicted with accuracy >= 99 %
range         spread between the most and least accurate point (percent)
rsq           squared Pearson correlation of predictions vs targets
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ACCURACY_THRESHOLD = 99.0


@dataclass(frozen=True)
class Metrics:
    perf: float
    count_percent: float
    range: float
    rsq: float
    # diagnostics, not serialized
    degenerate_rsq: bool = False
    zero_target_points: int = 0

    def to_json_dict(self) -> dict:
        """Serialize under the external field spellings."""
        return {"perf": self.perf, "countPercent": self.count_percent,
                "range": self.range, "rsq": self.rsq}

    @classmethod
    def from_json_dict(cls, payload: dict) -> "Metrics":
        return cls(perf=payload["perf"], count_percent=payload["countPercent"],
                   range=payload["range"], rsq=payload["rsq"])


def point_accuracy(pred: float, target: float) -> float:
    """Per-point accuracy: 100 * (1 - |pred - target| / |target|), floored at 0.

    A zero target has no relative scale; it scores 100 only on an exact match.
    """
    if target == 0.0:
        return 100.0 if pred == 0.0 else 0.0
    return max(0.0, 100.0 * (1.0 - abs(pred - target) / abs(target)))


def accuracies(preds: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized point_accuracy; exact elementwise match with the scalar form."""
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    zero = targets == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.maximum(0.0, 100.0 * (1.0 - np.abs(preds - targets) / np.abs(targets)))
    acc[zero] = np.where(preds[zero] == 0.0, 100.0, 0.0)
    return acc


def compute_metrics(preds: np.ndarray, targets: np.ndarray) -> Metrics:
    """Compute all four performance parameters over the full sample."""
    preds = np.asarray(preds, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if preds.shape != targets.shape:
        raise ValueError(f"length mismatch: {preds.shape} vs {targets.shape}")
    n = preds.size
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")

    err = preds - targets
    perf = float(np.sum(err * err) / n)

    acc = accuracies(preds, targets)
    count_percent = float(100.0 * np.count_nonzero(acc >= ACCURACY_THRESHOLD) / n)
    acc_range = float(np.max(acc) - np.min(acc))

    p_dev = preds - preds.mean()
    t_dev = targets - targets.mean()
    p_ss = float(np.dot(p_dev, p_dev))
    t_ss = float(np.dot(t_dev, t_dev))
    degenerate = p_ss == 0.0 or t_ss == 0.0
    if degenerate:
        rsq = 0.0
    else:
        r = float(np.dot(p_dev, t_dev)) / math.sqrt(p_ss * t_ss)
        rsq = r * r

    return Metrics(perf=perf, count_percent=count_percent, range=acc_range, rsq=rsq,
                   degenerate_rsq=degenerate,
                   zero_target_points=int(np.count_nonzero(targets == 0.0)))
