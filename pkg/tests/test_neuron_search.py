import math

import numpy as np
import pytest

from sensorlab.neuron_search import (SetResult, SweepRow, choose_neurons_for_set,
                                     count_cut, perf_cut, run_search, select_final,
                                     sweep_set, sweep_to_csv, SearchError)
from sensorlab.trainers import TrainerKind, TrainOptions


def oracle_cut(values):
    """Straight-line reimplementation of the threshold formula."""
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    std = math.sqrt(var)
    spread = max(values) + min(values) - 2 * mean
    return (std + spread) / 2


def oracle_choose(rows):
    """Brute-force per-set decision rule."""
    valid = [r for r in rows if not r.failed]
    i_p = 0
    for i, r in enumerate(valid):
        if r.perf < valid[i_p].perf:
            i_p = i
    i_c = 0
    for i, r in enumerate(valid):
        if r.count_percent > valid[i_c].count_percent:
            i_c = i
    chosen = valid[i_c] if valid[i_c].count_percent - valid[i_p].count_percent > 2.0 else valid[i_p]
    return chosen.n_hidden


class TestCuts:
    def test_constant_array_zero(self):
        assert perf_cut([3.0] * 6) == 0.0
        assert count_cut([100.0] * 6) == 0.0

    def test_worked_value_one_to_six(self):
        assert perf_cut([1, 2, 3, 4, 5, 6]) == pytest.approx(0.9354143466934853, abs=1e-12)

    def test_worked_value_outlier(self):
        assert perf_cut([1, 1, 1, 1, 1, 7]) == pytest.approx(3.224744871391589, abs=1e-12)

    def test_count_cut_derived_value(self):
        # sample std of this vector is sqrt(32/5) = 2.5298..., spread is -2
        assert count_cut([94, 96, 98, 100, 100, 100]) == pytest.approx(
            0.26491106406735176, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        values = list(rng.uniform(90, 100, 6))
        base = count_cut(values)
        for _ in range(10):
            rng.shuffle(values)
            assert count_cut(values) == pytest.approx(base, abs=1e-12)

    def test_agrees_with_oracle_on_random_vectors(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            values = list(rng.uniform(0, 50, 6))
            assert perf_cut(values) == pytest.approx(oracle_cut(values), abs=1e-12)
            assert count_cut(values) == pytest.approx(oracle_cut(values), abs=1e-12)

    def test_too_short(self):
        with pytest.raises(ValueError):
            perf_cut([1.0])


def row(set_id, n, perf, count):
    return SweepRow(set_id=set_id, n_hidden=n, perf=perf, count_percent=count)


class TestChooseNeurons:
    def test_count_wins_when_gap_over_two(self):
        rows = [row(1, n, perf, count) for n, perf, count in
                [(10, 5.0, 95.0), (12, 4.0, 100.0), (30, 1.0, 97.0)]]
        result = choose_neurons_for_set(rows)
        assert result.best_n == 12 and result.count_percent == 100.0

    def test_gap_exactly_two_keeps_min_perf(self):
        rows = [row(1, n, perf, count) for n, perf, count in
                [(12, 4.0, 100.0), (30, 1.0, 98.0)]]
        assert choose_neurons_for_set(rows).best_n == 30

    def test_coincident_optimum(self):
        rows = [row(1, n, perf, count) for n, perf, count in
                [(5, 2.0, 99.0), (8, 1.0, 100.0), (9, 3.0, 90.0)]]
        assert choose_neurons_for_set(rows).best_n == 8

    def test_ties_prefer_smaller_n(self):
        rows = [row(1, n, perf, count) for n, perf, count in
                [(5, 1.0, 100.0), (8, 1.0, 100.0)]]
        assert choose_neurons_for_set(rows).best_n == 5

    def test_failed_rows_excluded(self):
        rows = [SweepRow(set_id=1, n_hidden=2, perf=None, count_percent=None, failed=True),
                row(1, 3, 1.0, 99.0)]
        assert choose_neurons_for_set(rows).best_n == 3

    def test_all_failed_raises(self):
        rows = [SweepRow(set_id=1, n_hidden=2, perf=None, count_percent=None, failed=True)]
        with pytest.raises(SearchError):
            choose_neurons_for_set(rows)

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            k = int(rng.integers(2, 12))
            ns = sorted(rng.choice(np.arange(2, 51), size=k, replace=False))
            # integer-quantized counts make the diff == 2 boundary common
            rows = [row(1, int(n), float(rng.uniform(0.1, 9.0)),
                        float(rng.integers(94, 101))) for n in ns]
            assert choose_neurons_for_set(rows).best_n == oracle_choose(rows)

    def test_result_row_in_table(self):
        rng = np.random.default_rng(3)
        rows = [row(2, n, float(rng.uniform(1, 5)), float(rng.uniform(90, 100)))
                for n in range(2, 20)]
        result = choose_neurons_for_set(rows)
        match = [r for r in rows if r.n_hidden == result.best_n]
        assert match and match[0].perf == result.perf


def sr(set_id, n, perf, count):
    return SetResult(set_id=set_id, best_n=n, perf=perf, count_percent=count)


class TestSelectFinal:
    def test_dominant_set_wins(self):
        results = [sr(1, 10, 1.0, 100.0)] + [sr(i, 20, 5.0, 90.0) for i in range(2, 7)]
        assert select_final(results) == (1, 10)

    def test_neuron_band_breaks_perf_ties(self):
        results = [sr(1, 40, 1.0, 100.0), sr(2, 12, 1.05, 100.0),
                   sr(3, 20, 3.0, 98.0), sr(4, 20, 3.0, 98.0),
                   sr(5, 20, 3.0, 98.0), sr(6, 20, 3.0, 98.0)]
        pa = [r.perf for r in results]
        assert perf_cut(pa) >= 0.05  # both low-perf sets stay in the band
        assert select_final(results) == (2, 12)

    def test_identical_results_tie_break_on_set_id(self):
        results = [sr(i, 10, 2.0, 99.0) for i in range(1, 7)]
        assert select_final(results) == (1, 10)

    def test_empty_candidates_fall_back_to_min_perf(self):
        # min-perf set has terrible count; max-count set has terrible perf;
        # narrow bands exclude both from the candidate intersection
        results = [sr(1, 10, 1.0, 50.0), sr(2, 10, 1.001, 50.0), sr(3, 10, 1.002, 50.0),
                   sr(4, 10, 1.003, 50.0), sr(5, 10, 1.004, 50.0), sr(6, 40, 9.0, 100.0)]
        assert select_final(results)[0] == 1

    def test_permutation_invariant(self):
        rng = np.random.default_rng(11)
        results = [sr(i, int(rng.integers(2, 51)), float(rng.uniform(1, 5)),
                      float(rng.uniform(90, 100))) for i in range(1, 7)]
        base = select_final(results)
        for _ in range(10):
            shuffled = list(results)
            rng.shuffle(shuffled)
            assert select_final(shuffled) == base

    def test_single_result(self):
        assert select_final([sr(4, 7, 1.0, 99.0)]) == (4, 7)


class TestSweep:
    def test_sweep_rows_and_selection(self, linear_prepared):
        scaled, split = linear_prepared
        opts = TrainOptions(max_epochs=60)
        rows = sweep_set(scaled, split, 2, TrainerKind.LM, opts, n_values=range(2, 7))
        assert [r.n_hidden for r in rows] == [2, 3, 4, 5, 6]
        assert all(not r.failed for r in rows)
        result = choose_neurons_for_set(rows)
        assert any(r.n_hidden == result.best_n for r in rows)

    def test_sweep_deterministic(self, linear_prepared):
        scaled, split = linear_prepared
        opts = TrainOptions(max_epochs=30)
        a = sweep_set(scaled, split, 3, TrainerKind.LM, opts, n_values=range(2, 5))
        b = sweep_set(scaled, split, 3, TrainerKind.LM, opts, n_values=range(2, 5))
        assert a == b

    def test_default_range_is_49_rows(self, linear_prepared):
        # full 2..50 sweep at a tiny epoch budget, just to pin the table shape
        scaled, split = linear_prepared
        rows = sweep_set(scaled, split, 2, TrainerKind.LM, TrainOptions(max_epochs=2))
        assert len(rows) == 49
        assert rows[0].n_hidden == 2 and rows[-1].n_hidden == 50

    def test_no_catastrophic_overfit_on_linear_fixture(self, linear_prepared):
        # the guard is against the 151-parameter net blowing up on the 20
        # unseen points; when both nets converge to their numerical floors
        # (sub-1e-6 MSE on targets spanning [1, 21]) the raw ratio is noise
        scaled, split = linear_prepared
        opts = TrainOptions(max_epochs=150)
        rows = sweep_set(scaled, split, 2, TrainerKind.LM, opts, n_values=[5, 50])
        perf5, perf50 = rows[0].perf, rows[1].perf
        assert perf5 <= 10.0 * perf50 or (perf5 <= 1e-6 and perf50 <= 1e-6)

    def test_run_search_outcome(self, linear_prepared, tmp_path):
        scaled, split = linear_prepared
        outcome = run_search(scaled, split, TrainerKind.LM, TrainOptions(max_epochs=40),
                             n_values=range(2, 6), jobs=1)
        assert len(outcome.set_results) == 6
        assert len(outcome.rows) == 6 * 4
        assert outcome.winner_set in range(1, 7)
        assert 2 <= outcome.winner_n <= 5
        sweep_to_csv(outcome.rows, tmp_path / "sweep.csv")
        header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
        assert header == "set,n,perf,countPercent,range,rsq,flags"
