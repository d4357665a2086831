"""Adaptive Weights and Biases search: coarse-to-fine tuning of one configured
coefficient at a time.

Each coefficient is refined in three passes. The first sweeps the full
[-5, 5] span; the second narrows to the quarter-span containing the current
value and, if that sweep finds nothing better, retries an adaptive space
mirrored around zero; the third scans a tight +/-0.01 window at the finest
step. Candidate points are judged against the current best metrics by a
fixed cascade: lower perf, else lower range, else higher countPercent, else
higher rsq; ties go to the smaller coefficient.

Every trained point is memoized by its full coefficient tuple, so revisited
points are served from cache and a wrong path is never retrained. After the
third pass the adapted coefficient is kept only if its metrics do not degrade
the originals (perf must not rise; the other three parameters may not get
worse beyond 1e-9 of float noise). Step sizes depend on the trainer: 0.1 /
0.01 / 0.0001 for LM, 0.5 / 0.05 / 0.005 for the slower BR.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

from .evaluation import EvalOutcome, parallel_map
from .metrics import Metrics
from .netcore import COEFF_MAX, COEFF_MIN, WeightConfig
from .trainers import TrainerKind

DEGRADE_TOL = 1e-9


class Quantity(enum.Enum):
    IW = "IW"
    B1 = "B1"
    B2 = "B2"
    LW = "LW"


QUANTITY_ORDER = (Quantity.IW, Quantity.B1, Quantity.B2, Quantity.LW)
_FIELD = {Quantity.IW: "c_iw", Quantity.B1: "c_b1", Quantity.B2: "c_b2", Quantity.LW: "c_lw"}


@dataclass(frozen=True)
class StepSchedule:
    s1: float
    s2: float
    s3: float


LM_STEPS = StepSchedule(0.1, 0.01, 0.0001)
BR_STEPS = StepSchedule(0.5, 0.05, 0.005)


def schedule_for(kind: TrainerKind) -> StepSchedule:
    return LM_STEPS if kind is TrainerKind.LM else BR_STEPS


class PickResult(NamedTuple):
    index: int
    criterion: str


@dataclass(frozen=True)
class GridEvaluation:
    coefficient: float
    metrics: Metrics | None
    failed: bool = False


@dataclass(frozen=True)
class IterationTrace:
    iteration: int
    lo: float
    hi: float
    step: float
    evaluations: tuple[GridEvaluation, ...]   # ordered by coefficient, fallback merged in
    chosen_index: int | None                  # into evaluations; None = no improvement
    criterion: str | None
    chosen_coefficient: float                 # carried over unchanged on no improvement
    fallback_taken: bool = False
    fallback_lo: float | None = None
    fallback_hi: float | None = None


@dataclass(frozen=True)
class AwbTrace:
    quantity: str
    original_coefficient: float
    original_metrics: Metrics
    iterations: tuple[IterationTrace, ...]
    adapted_coefficient: float
    adapted_metrics: Metrics
    accepted: bool
    final_coefficient: float


@dataclass
class AwbContext:
    """State threaded through the passes: evaluator, schedule, current config/baseline.

    `evaluate` maps a WeightConfig to an EvalOutcome; results are memoized in
    `cache` keyed by the full coefficient tuple, so identical configurations
    are never retrained, within or across quantities.
    """

    evaluate: Callable[[WeightConfig], EvalOutcome]
    schedule: StepSchedule
    config: WeightConfig
    baseline: Metrics | None = None
    cache: dict = field(default_factory=dict)
    jobs: int = 1

    def eval_cached(self, cfg: WeightConfig) -> EvalOutcome:
        key = cfg.as_tuple()
        if key not in self.cache:
            self.cache[key] = self.evaluate(cfg)
        return self.cache[key]

    def ensure_baseline(self) -> Metrics:
        if self.baseline is None:
            outcome = self.eval_cached(self.config)
            if outcome.failed:
                raise RuntimeError(f"baseline configuration failed to train: {outcome.message}")
            self.baseline = outcome.metrics
        return self.baseline


def pick_index(sweep: Sequence[Metrics], baseline: Metrics) -> PickResult | None:
    """First strict improvement over the baseline in the fixed criterion cascade.

    The sweep must be ordered by ascending coefficient so that argmin/argmax
    ties resolve to the smallest coefficient. Returns None when no entry
    improves on any criterion.
    """
    if not sweep:
        return None
    perfs = [m.perf for m in sweep]
    i = min(range(len(sweep)), key=perfs.__getitem__)
    if perfs[i] < baseline.perf:
        return PickResult(i, "perf")
    ranges = [m.range for m in sweep]
    i = min(range(len(sweep)), key=ranges.__getitem__)
    if ranges[i] < baseline.range:
        return PickResult(i, "range")
    counts = [m.count_percent for m in sweep]
    i = max(range(len(sweep)), key=lambda j: (counts[j], -j))
    if counts[i] > baseline.count_percent:
        return PickResult(i, "countPercent")
    rsqs = [m.rsq for m in sweep]
    i = max(range(len(sweep)), key=lambda j: (rsqs[j], -j))
    if rsqs[i] > baseline.rsq:
        return PickResult(i, "rsq")
    return None


def grid_points(lo: float, hi: float, step: float) -> list[float]:
    """lo, lo+step, ... up to hi (within a small tolerance of the exact count)."""
    if hi < lo:
        raise ValueError(f"empty space [{lo}, {hi}]")
    count = int(math.floor((hi - lo) / step + 1e-6)) + 1
    return [min(lo + k * step, hi) for k in range(count)]


def _clamp_space(lo: float, hi: float) -> tuple[float, float]:
    return max(lo, COEFF_MIN), min(hi, COEFF_MAX)


def _with_coefficient(cfg: WeightConfig, q: Quantity, value: float) -> WeightConfig:
    return replace(cfg, **{_FIELD[q]: value})


def _sweep_space(ctx: AwbContext, q: Quantity, lo: float, hi: float,
                 step: float) -> list[GridEvaluation]:
    """Evaluate a grid over one coefficient, memoized; cache misses may run in parallel."""
    coefficients = grid_points(lo, hi, step)
    configs = [_with_coefficient(ctx.config, q, c) for c in coefficients]
    missing = [cfg for cfg in configs if cfg.as_tuple() not in ctx.cache]
    if missing:
        fresh = parallel_map(ctx.evaluate, missing, ctx.jobs)
        for cfg, outcome in zip(missing, fresh):
            ctx.cache[cfg.as_tuple()] = outcome
    evals = []
    for c, cfg in zip(coefficients, configs):
        outcome = ctx.cache[cfg.as_tuple()]
        evals.append(GridEvaluation(coefficient=c, metrics=outcome.metrics,
                                    failed=outcome.failed))
    return evals


def _pick_from(evals: Sequence[GridEvaluation],
               baseline: Metrics) -> tuple[PickResult | None, float | None, Metrics | None]:
    """Run pick_index over the non-failed entries, mapping back to a coefficient."""
    usable = [e for e in evals if not e.failed]
    pick = pick_index([e.metrics for e in usable], baseline)
    if pick is None:
        return None, None, None
    chosen = usable[pick.index]
    return pick, chosen.coefficient, chosen.metrics


def _merge_ordered(*groups: Sequence[GridEvaluation]) -> list[GridEvaluation]:
    by_coeff: dict[float, GridEvaluation] = {}
    for group in groups:
        for e in group:
            by_coeff.setdefault(e.coefficient, e)
    return [by_coeff[c] for c in sorted(by_coeff)]


def _metrics_at(ctx: AwbContext, q: Quantity, coefficient: float) -> Metrics:
    outcome = ctx.eval_cached(_with_coefficient(ctx.config, q, coefficient))
    if outcome.failed:
        raise RuntimeError(f"evaluation at coefficient {coefficient} failed: {outcome.message}")
    return outcome.metrics


def iteration1(ctx: AwbContext, q: Quantity) -> tuple[float, IterationTrace]:
    """Coarse pass over the whole admissible span [-5, 5]."""
    baseline = ctx.ensure_baseline()
    step = ctx.schedule.s1
    evals = _sweep_space(ctx, q, COEFF_MIN, COEFF_MAX, step)
    pick, coeff, _ = _pick_from(evals, baseline)
    original = getattr(ctx.config, _FIELD[q])
    chosen = coeff if pick is not None else original
    trace = IterationTrace(
        iteration=1, lo=COEFF_MIN, hi=COEFF_MAX, step=step,
        evaluations=tuple(evals),
        chosen_index=_index_of(evals, coeff) if pick is not None else None,
        criterion=pick.criterion if pick is not None else None,
        chosen_coefficient=chosen,
    )
    return chosen, trace


def second_spaces(c1: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Primary and fallback spaces of the second pass for a given first-pass value."""
    if 0.0 <= c1 <= 2.5:
        primary = (0.0, 2.5)
    elif -2.5 <= c1 < 0.0:
        primary = (-2.5, 0.0)
    elif c1 > 2.5:
        primary = (2.5, 5.0)
    else:
        primary = (-5.0, -2.5)
    if c1 == 0.0:
        fallback = (-0.5, 0.5)
    elif c1 > 0.0:
        fallback = (-c1 + 0.1, c1 + 0.1)
    else:
        fallback = (c1 - 0.1, -c1 - 0.1)
    return primary, _clamp_space(*fallback)


def iteration2(ctx: AwbContext, q: Quantity, c1: float) -> tuple[float, IterationTrace]:
    """Quarter-span pass with the adaptive mirrored fallback on no improvement."""
    baseline = _metrics_at(ctx, q, c1)
    step = ctx.schedule.s2
    (p_lo, p_hi), (f_lo, f_hi) = second_spaces(c1)
    primary_evals = _sweep_space(ctx, q, p_lo, p_hi, step)
    pick, coeff, _ = _pick_from(primary_evals, baseline)
    fallback_evals: list[GridEvaluation] = []
    fallback_taken = False
    if pick is None:
        fallback_evals = _sweep_space(ctx, q, f_lo, f_hi, step)
        pick, coeff, _ = _pick_from(fallback_evals, baseline)
        fallback_taken = pick is not None
    merged = _merge_ordered(primary_evals, fallback_evals)
    chosen = coeff if pick is not None else c1
    trace = IterationTrace(
        iteration=2, lo=p_lo, hi=p_hi, step=step,
        evaluations=tuple(merged),
        chosen_index=_index_of(merged, coeff) if pick is not None else None,
        criterion=pick.criterion if pick is not None else None,
        chosen_coefficient=chosen,
        fallback_taken=fallback_taken,
        fallback_lo=f_lo if fallback_evals else None,
        fallback_hi=f_hi if fallback_evals else None,
    )
    return chosen, trace


def iteration3(ctx: AwbContext, q: Quantity, c2: float) -> tuple[float, IterationTrace]:
    """Fine pass over [c2 - 0.01, c2 + 0.01] at the smallest step."""
    baseline = _metrics_at(ctx, q, c2)
    step = ctx.schedule.s3
    lo, hi = _clamp_space(c2 - 0.01, c2 + 0.01)
    evals = _sweep_space(ctx, q, lo, hi, step)
    pick, coeff, _ = _pick_from(evals, baseline)
    chosen = coeff if pick is not None else c2
    trace = IterationTrace(
        iteration=3, lo=lo, hi=hi, step=step,
        evaluations=tuple(evals),
        chosen_index=_index_of(evals, coeff) if pick is not None else None,
        criterion=pick.criterion if pick is not None else None,
        chosen_coefficient=chosen,
    )
    return chosen, trace


def _index_of(evals: Sequence[GridEvaluation], coefficient: float) -> int:
    for i, e in enumerate(evals):
        if e.coefficient == coefficient:
            return i
    raise ValueError(f"coefficient {coefficient} not among evaluations")


def _non_degrading(adapted: Metrics, original: Metrics) -> bool:
    """perf must not rise at all; the rest may not get worse beyond float noise."""
    return (adapted.perf <= original.perf
            and adapted.range <= original.range + DEGRADE_TOL
            and adapted.count_percent >= original.count_percent - DEGRADE_TOL
            and adapted.rsq >= original.rsq - DEGRADE_TOL)


def tune_quantity(ctx: AwbContext, q: Quantity) -> tuple[float, AwbTrace]:
    """Run the three passes for one coefficient and apply the acceptance check.

    The adapted coefficient is returned only if its metrics do not degrade the
    originals; otherwise the original coefficient stands.
    """
    original_c = getattr(ctx.config, _FIELD[q])
    original_m = ctx.ensure_baseline()
    c1, t1 = iteration1(ctx, q)
    c2, t2 = iteration2(ctx, q, c1)
    c3, t3 = iteration3(ctx, q, c2)
    adapted_m = _metrics_at(ctx, q, c3)
    accepted = c3 != original_c and _non_degrading(adapted_m, original_m)
    final = c3 if accepted else original_c
    trace = AwbTrace(
        quantity=q.value,
        original_coefficient=original_c,
        original_metrics=original_m,
        iterations=(t1, t2, t3),
        adapted_coefficient=c3,
        adapted_metrics=adapted_m,
        accepted=accepted,
        final_coefficient=final,
    )
    return final, trace


def tune_all(ctx: AwbContext,
             quantities: Sequence[Quantity] = QUANTITY_ORDER) -> tuple[WeightConfig, list[AwbTrace]]:
    """Tune coefficients in the fixed IW, B1, B2, LW order.

    Each quantity is tuned against the configuration and baseline left by the
    previous one; the shared cache carries over so repeat points never retrain.
    """
    ctx.ensure_baseline()
    traces = []
    for q in QUANTITY_ORDER:
        if q not in quantities:
            continue
        coefficient, trace = tune_quantity(ctx, q)
        traces.append(trace)
        if trace.accepted:
            ctx = replace(ctx, config=_with_coefficient(ctx.config, q, coefficient),
                          baseline=trace.adapted_metrics)
    return ctx.config, traces


def _metrics_json(m: Metrics | None) -> dict | None:
    return None if m is None else m.to_json_dict()


def traces_to_json_dict(traces: Sequence[AwbTrace]) -> list[dict]:
    payload = []
    for t in traces:
        payload.append({
            "quantity": t.quantity,
            "originalCoefficient": t.original_coefficient,
            "originalMetrics": _metrics_json(t.original_metrics),
            "adaptedCoefficient": t.adapted_coefficient,
            "adaptedMetrics": _metrics_json(t.adapted_metrics),
            "accepted": t.accepted,
            "finalCoefficient": t.final_coefficient,
            "iterations": [
                {
                    "iteration": it.iteration,
                    "space": [it.lo, it.hi],
                    "step": it.step,
                    "fallbackTaken": it.fallback_taken,
                    "fallbackSpace": (None if it.fallback_lo is None
                                      else [it.fallback_lo, it.fallback_hi]),
                    "chosenIndex": it.chosen_index,
                    "criterion": it.criterion,
                    "chosenCoefficient": it.chosen_coefficient,
                    "evaluations": [
                        {"coefficient": e.coefficient, "failed": e.failed,
                         "metrics": _metrics_json(e.metrics)}
                        for e in it.evaluations
                    ],
                }
                for it in t.iterations
            ],
        })
    return payload


def save_traces_json(traces: Sequence[AwbTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(traces_to_json_dict(traces), fh, indent=2)
        fh.write("\n")


def save_traces_csv(traces: Sequence[AwbTrace], path) -> None:
    """One row per evaluated point across all quantities and passes."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "iteration", "coefficient",
                         "perf", "range", "countPercent", "rsq", "flags"])
        for t in traces:
            for it in t.iterations:
                for e in it.evaluations:
                    if e.failed:
                        writer.writerow([t.quantity, it.iteration, repr(e.coefficient),
                                         "", "", "", "", "failed"])
                    else:
                        m = e.metrics
                        writer.writerow([t.quantity, it.iteration, repr(e.coefficient),
                                         repr(m.perf), repr(m.range),
                                         repr(m.count_percent), repr(m.rsq), ""])
