"""Neuron-count selection: sweep each configured set over 2..50 hidden neurons,
apply the perf/countPercent decision rule per set, then compare the six optima
with the threshold quantities.

The thresholds are spread statistics over the six per-set optima:

    cut(v) = mean of [ sample_std(v),  max(v) + min(v) - 2 * mean(v) ]

applied to the perf array (perfCut) and the countPercent array (countCut),
plus a fixed neuron band of 5 (neuronCut). A cut can come out negative; when
used as a tolerance band it is clamped at zero so the band never excludes the
optimum itself.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset, SplitIndices
from .evaluation import EvalOutcome, EvalProblem, evaluate_many
from .netcore import SET_IDS, config_for_set
from .trainers import TrainerKind, TrainOptions

NEURON_MIN = 2
NEURON_MAX = 50
NEURON_CUT = 5


class SearchError(RuntimeError):
    """No usable sweep rows (every training attempt aborted)."""


@dataclass(frozen=True)
class SweepRow:
    set_id: int
    n_hidden: int
    perf: float | None
    count_percent: float | None
    rsq: float | None = None
    range: float | None = None
    failed: bool = False
    message: str = ""


@dataclass(frozen=True)
class SetResult:
    set_id: int
    best_n: int
    perf: float
    count_percent: float


@dataclass(frozen=True)
class SearchOutcome:
    rows: tuple[SweepRow, ...]          # all sets, ordered by (set, n)
    set_results: tuple[SetResult, ...]  # one per set that produced any valid row
    neuron_array: tuple[int, ...]
    perf_array: tuple[float, ...]
    count_array: tuple[float, ...]
    perf_cut: float
    count_cut: float
    winner_set: int
    winner_n: int

    def to_json_dict(self) -> dict:
        return {
            "winner": {"set": self.winner_set, "neurons": self.winner_n},
            "neuronCut": NEURON_CUT,
            "perfCut": self.perf_cut,
            "countCut": self.count_cut,
            "sets": [
                {"set": r.set_id, "neurons": r.best_n, "perf": r.perf,
                 "countPercent": r.count_percent}
                for r in self.set_results
            ],
        }


def _rows_from_outcomes(set_id: int, n_values: Sequence[int],
                        outcomes: Sequence[EvalOutcome]) -> list[SweepRow]:
    rows = []
    for n, outcome in zip(n_values, outcomes):
        if outcome.failed:
            rows.append(SweepRow(set_id=set_id, n_hidden=n, perf=None, count_percent=None,
                                 failed=True, message=outcome.message))
        else:
            m = outcome.metrics
            rows.append(SweepRow(set_id=set_id, n_hidden=n, perf=m.perf,
                                 count_percent=m.count_percent, rsq=m.rsq, range=m.range))
    return rows


def sweep_set(data: Dataset, split: SplitIndices, set_id: int, kind: TrainerKind,
              opts: TrainOptions | None = None,
              n_values: Sequence[int] | None = None,
              jobs: int = 1) -> list[SweepRow]:
    """Train the set's configuration at every neuron count and score on full data.

    A training abort flags its row and the sweep continues.
    """
    opts = opts or TrainOptions()
    n_values = list(n_values) if n_values is not None else list(range(NEURON_MIN, NEURON_MAX + 1))
    cfg = config_for_set(set_id)
    tasks = [(EvalProblem(data=data, split=split, n_hidden=n, kind=kind, opts=opts), cfg)
             for n in n_values]
    return _rows_from_outcomes(set_id, n_values, evaluate_many(tasks, jobs))


def choose_neurons_for_set(rows: Sequence[SweepRow]) -> SetResult:
    """Per-set decision rule between the min-perf row and the max-countPercent row.

    If the best countPercent beats the countPercent at minimum perf by more
    than 2, the max-count row wins; otherwise the min-perf row does. Ties go
    to the smaller neuron count (rows are ordered by n).
    """
    valid = [r for r in rows if not r.failed]
    if not valid:
        set_id = rows[0].set_id if rows else "?"
        raise SearchError(f"set {set_id}: every neuron count failed to train")
    best_perf = min(valid, key=lambda r: r.perf)
    best_count = max(valid, key=lambda r: r.count_percent)  # max() keeps first tie = smaller n
    chosen = best_count if best_count.count_percent - best_perf.count_percent > 2.0 else best_perf
    return SetResult(set_id=chosen.set_id, best_n=chosen.n_hidden,
                     perf=chosen.perf, count_percent=chosen.count_percent)


def _spread_cut(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError(f"need at least 2 values, got {values.size}")
    spread = float(values.max() + values.min() - 2.0 * values.mean())
    return (float(values.std(ddof=1)) + spread) / 2.0


def perf_cut(perf_array: Sequence[float]) -> float:
    """Threshold over the six per-set perf optima."""
    return _spread_cut(perf_array)


def count_cut(count_array: Sequence[float]) -> float:
    """Threshold over the six per-set countPercent optima."""
    return _spread_cut(count_array)


def select_final(results: Sequence[SetResult], neuron_cut: int = NEURON_CUT) -> tuple[int, int]:
    """Pick the winning (set, neurons) from the per-set optima.

    Candidates must sit within the perf band above the best perf and within
    the count band below the best countPercent (bands clamped at >= 0). Among
    candidates, sets within neuron_cut of the smallest optimum are preferred.
    The winner is lexicographic (min perf, max count, min n, min set id); if
    no candidate passes both bands, plain argmin perf wins.
    """
    results = list(results)
    if not results:
        raise SearchError("no set results to select from")
    if len(results) == 1:
        return results[0].set_id, results[0].best_n
    pa = [r.perf for r in results]
    ca = [r.count_percent for r in results]
    na = [r.best_n for r in results]
    perf_band = max(perf_cut(pa), 0.0)
    count_band = max(count_cut(ca), 0.0)
    candidates = [r for r in results
                  if r.perf <= min(pa) + perf_band and r.count_percent >= max(ca) - count_band]
    if candidates:
        near = [r for r in candidates if r.best_n <= min(na) + neuron_cut]
        pool = near if near else candidates
        winner = min(pool, key=lambda r: (r.perf, -r.count_percent, r.best_n, r.set_id))
    else:
        winner = min(results, key=lambda r: (r.perf, r.set_id))
    return winner.set_id, winner.best_n


def run_search(data: Dataset, split: SplitIndices, kind: TrainerKind,
               opts: TrainOptions | None = None,
               n_values: Sequence[int] | None = None,
               jobs: int = 1) -> SearchOutcome:
    """Full six-set search: sweeps, per-set decisions, thresholds, final winner."""
    opts = opts or TrainOptions()
    n_values = list(n_values) if n_values is not None else list(range(NEURON_MIN, NEURON_MAX + 1))
    cfg_by_set = {s: config_for_set(s) for s in SET_IDS}
    tasks = [(EvalProblem(data=data, split=split, n_hidden=n, kind=kind, opts=opts),
              cfg_by_set[s])
             for s in SET_IDS for n in n_values]
    outcomes = evaluate_many(tasks, jobs)

    rows: list[SweepRow] = []
    set_results: list[SetResult] = []
    for i, s in enumerate(SET_IDS):
        set_rows = _rows_from_outcomes(s, n_values,
                                       outcomes[i * len(n_values):(i + 1) * len(n_values)])
        rows.extend(set_rows)
        try:
            set_results.append(choose_neurons_for_set(set_rows))
        except SearchError:
            continue
    if not set_results:
        raise SearchError("neuron search failed: no set produced a trainable network")

    pa = [r.perf for r in set_results]
    ca = [r.count_percent for r in set_results]
    cuts_ok = len(set_results) >= 2
    winner_set, winner_n = select_final(set_results)
    return SearchOutcome(
        rows=tuple(rows),
        set_results=tuple(set_results),
        neuron_array=tuple(r.best_n for r in set_results),
        perf_array=tuple(pa),
        count_array=tuple(ca),
        perf_cut=perf_cut(pa) if cuts_ok else 0.0,
        count_cut=count_cut(ca) if cuts_ok else 0.0,
        winner_set=winner_set,
        winner_n=winner_n,
    )


def sweep_to_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "n", "perf", "countPercent", "range", "rsq", "flags"])
        for r in rows:
            writer.writerow([
                r.set_id, r.n_hidden,
                "" if r.perf is None else repr(r.perf),
                "" if r.count_percent is None else repr(r.count_percent),
                "" if r.range is None else repr(r.range),
                "" if r.rsq is None else repr(r.rsq),
                "failed" if r.failed else "",
            ])
