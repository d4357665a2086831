"""Train-and-score of one configured network, plus the parallel map used by sweeps.

Everything here is pure: an EvalProblem plus a WeightConfig fully determines
the outcome, which makes results safe to compute in worker processes and to
memoize. Results are collected in input order, so the assembled tables are
bit-identical no matter how many jobs run.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .dataset import Dataset, SplitIndices
from .metrics import Metrics, compute_metrics
from .netcore import WeightConfig, init_params, predict
from .trainers import TrainedModel, TrainerKind, TrainingAbort, TrainOptions, train


@dataclass(frozen=True)
class EvalProblem:
    """Scaled data, division and trainer settings shared by a family of evaluations."""

    data: Dataset
    split: SplitIndices
    n_hidden: int
    kind: TrainerKind
    opts: TrainOptions


@dataclass(frozen=True)
class EvalOutcome:
    metrics: Metrics | None
    model: TrainedModel | None
    failed: bool = False
    message: str = ""


def evaluate_config(problem: EvalProblem, cfg: WeightConfig) -> EvalOutcome:
    """Initialize, train, and score on the full dataset. Aborts become flagged outcomes."""
    init = init_params(problem.data.d, problem.n_hidden, cfg)
    try:
        model = train(problem.kind, init, problem.data, problem.split, problem.opts)
    except TrainingAbort as exc:
        return EvalOutcome(metrics=None, model=None, failed=True, message=str(exc))
    preds = predict(model.params, problem.data.inputs)
    return EvalOutcome(metrics=compute_metrics(preds, problem.data.targets), model=model)


def _eval_task(task: tuple[EvalProblem, WeightConfig]) -> EvalOutcome:
    return evaluate_config(*task)


def evaluate_many(tasks: list[tuple[EvalProblem, WeightConfig]], jobs: int = 1) -> list[EvalOutcome]:
    """Evaluate independent (problem, config) tasks, preserving input order."""
    return parallel_map(_eval_task, tasks, jobs)


def default_jobs() -> int:
    return os.cpu_count() or 1


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Order-preserving map, optionally over a process pool.

    `fn` and the items must be picklable when jobs > 1.
    """
    items = list(items)
    if jobs is None:
        jobs = default_jobs()
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    workers = min(jobs, len(items))
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
