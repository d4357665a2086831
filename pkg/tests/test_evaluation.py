import functools

import numpy as np

from sensorlab import evaluation
from sensorlab.awb import AwbContext, BR_STEPS, Quantity, tune_all
from sensorlab.evaluation import (EvalProblem, evaluate_config, evaluate_many,
                                  parallel_map)
from sensorlab.netcore import config_for_set
from sensorlab.trainers import TrainerKind, TrainingAbort, TrainOptions


def square(x):
    return x * x


class TestParallelMap:
    def test_sequential(self):
        assert parallel_map(square, [1, 2, 3], jobs=1) == [1, 4, 9]

    def test_pool_preserves_order(self):
        items = list(range(40))
        assert parallel_map(square, items, jobs=4) == [square(i) for i in items]

    def test_single_item_stays_in_process(self):
        seen = []
        assert parallel_map(seen.append, [7], jobs=8) == [None]
        assert seen == [7]


class TestEvaluateConfig:
    def test_outcome_fields(self, engine_prepared):
        scaled, split = engine_prepared
        problem = EvalProblem(data=scaled, split=split, n_hidden=3,
                              kind=TrainerKind.LM, opts=TrainOptions(max_epochs=20))
        outcome = evaluate_config(problem, config_for_set(2))
        assert not outcome.failed
        assert outcome.metrics.perf > 0
        assert outcome.model.params.h == 3

    def test_abort_becomes_flagged_outcome(self, engine_prepared, monkeypatch):
        scaled, split = engine_prepared

        def exploding_train(kind, init, data, split, opts):
            raise TrainingAbort("non-finite loss at epoch 2")

        monkeypatch.setattr(evaluation, "train", exploding_train)
        problem = EvalProblem(data=scaled, split=split, n_hidden=3,
                              kind=TrainerKind.LM, opts=TrainOptions(max_epochs=20))
        outcome = evaluate_config(problem, config_for_set(2))
        assert outcome.failed and "non-finite" in outcome.message
        assert outcome.metrics is None

    def test_parallel_matches_sequential_bitwise(self, engine_prepared):
        scaled, split = engine_prepared
        problem = EvalProblem(data=scaled, split=split, n_hidden=3,
                              kind=TrainerKind.LM, opts=TrainOptions(max_epochs=15))
        tasks = [(problem, config_for_set(s)) for s in (1, 2, 3, 4)]
        seq = evaluate_many(tasks, jobs=1)
        par = evaluate_many(tasks, jobs=3)
        for a, b in zip(seq, par):
            assert a.metrics == b.metrics
            assert np.array_equal(a.model.params.iw, b.model.params.iw)
            assert a.model.history == b.model.history


class TestAwbWithRealTrainer:
    def test_bad_start_improves_and_memoization_is_sound(self, engine_prepared):
        # Set 1 starts with LW = 0 (a constant-output network), a deliberately
        # poor initial configuration on the engine fixture
        scaled, split = engine_prepared
        problem = EvalProblem(data=scaled, split=split, n_hidden=3,
                              kind=TrainerKind.LM, opts=TrainOptions(max_epochs=30))
        evaluate = functools.partial(evaluate_config, problem)
        ctx = AwbContext(evaluate=evaluate, schedule=BR_STEPS,
                         config=config_for_set(1), jobs=1)
        before = ctx.ensure_baseline()
        final_cfg, traces = tune_all(ctx, quantities=(Quantity.IW, Quantity.LW))
        after = ctx.eval_cached(final_cfg).metrics
        assert after.perf <= before.perf
        # cached outcome is bit-identical to a fresh evaluation
        fresh = evaluate(final_cfg)
        cached = ctx.eval_cached(final_cfg)
        assert fresh.metrics == cached.metrics
        assert np.array_equal(fresh.model.params.iw, cached.model.params.iw)
        assert fresh.model.history == cached.model.history
