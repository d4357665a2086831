import json
import subprocess
import sys

import pytest

from sensorlab import cli
from sensorlab.awb import Quantity
from sensorlab.pipeline import ConfigError, RunConfig, parse_quantities, run_pipeline
from sensorlab.trainers import TrainerKind, TrainingAbort


def quick_config(tmp_path, **overrides) -> dict:
    payload = {
        "synthetic": {"n": 300, "seed": 5, "noise_sd": 0.5},
        "trainer": "LM",
        "profile": "quick",
        "neuron_min": 2,
        "neuron_max": 4,
        "awb_quantities": ["IW", "LW"],
        "jobs": 1,
        "output_dir": str(tmp_path / "out"),
    }
    payload.update(overrides)
    return payload


def write_config(tmp_path, **overrides):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(quick_config(tmp_path, **overrides)), encoding="utf-8")
    return path


class TestRunConfig:
    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "bogus": 1})

    def test_both_sources_rejected(self):
        with pytest.raises(ConfigError, match="exactly one"):
            RunConfig.from_dict({"data_path": "x.csv", "synthetic": {"n": 10, "seed": 0}})

    def test_neither_source_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({})

    def test_bad_trainer(self):
        with pytest.raises(ConfigError, match="trainer"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "trainer": "SGD"})

    def test_bad_neuron_range(self):
        with pytest.raises(ConfigError, match="neuron range"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0},
                                 "neuron_min": 10, "neuron_max": 4})
        with pytest.raises(ConfigError, match="neuron range"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "neuron_max": 80})

    def test_unknown_train_option(self):
        with pytest.raises(ConfigError, match="train_options"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0},
                                 "train_options": {"learning_rate": 0.1}})

    def test_quick_profile_effective(self):
        cfg = RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "profile": "quick"})
        eff = cfg.effective()
        assert eff.train_options.max_epochs == 50
        assert (eff.neuron_min, eff.neuron_max) == (2, 12)

    def test_parse_quantities(self):
        assert parse_quantities("IW,LW") == (Quantity.IW, Quantity.LW)
        assert parse_quantities(["b1"]) == (Quantity.B1,)
        with pytest.raises(ConfigError):
            parse_quantities("XX")

    def test_config_echo_round_trips(self):
        cfg = RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "trainer": "BR"})
        again = RunConfig.from_dict(cfg.to_json_dict())
        assert again.trainer is TrainerKind.BR

    def test_partial_pin_rejected(self):
        with pytest.raises(ConfigError, match="together"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "set_id": 2})
        with pytest.raises(ConfigError, match="together"):
            RunConfig.from_dict({"synthetic": {"n": 10, "seed": 0}, "neurons": 5})


class TestRunPipeline:
    def test_artifacts_and_metrics(self, tmp_path):
        cfg = RunConfig.from_dict(quick_config(tmp_path))
        result = run_pipeline(cfg)
        out = result.output_dir
        for name in ("run_config.json", "data.csv", "ranking.csv", "split.json",
                     "scaler.json", "sweep.csv", "selection.json", "model.json",
                     "history.csv", "predictions.csv", "metrics.json",
                     "awb_trace.json", "awb_trace.csv", "run.log"):
            assert (out / name).exists(), name
        payload = json.loads((out / "metrics.json").read_text())
        assert payload["final"]["perf"] <= payload["initial"]["perf"]
        assert set(payload["final"]) == {"perf", "countPercent", "range", "rsq"}
        preds = (out / "predictions.csv").read_text().splitlines()
        assert preds[0] == "index,target,prediction,accuracy"
        assert len(preds) == 301

    def test_pinned_set_skips_search(self, tmp_path):
        cfg = RunConfig.from_dict(quick_config(tmp_path, set_id=2, neurons=3))
        result = run_pipeline(cfg)
        assert result.winner_set == 2 and result.winner_n == 3
        assert not (result.output_dir / "sweep.csv").exists()

    def test_no_awb_quantities(self, tmp_path):
        cfg = RunConfig.from_dict(quick_config(tmp_path, awb_quantities=[],
                                               set_id=2, neurons=3))
        result = run_pipeline(cfg)
        assert result.initial_metrics == result.final_metrics
        assert not (result.output_dir / "awb_trace.json").exists()

    def test_br_pipeline_end_to_end(self, tmp_path):
        cfg = RunConfig.from_dict(quick_config(tmp_path, trainer="BR",
                                               awb_quantities=["B2"]))
        result = run_pipeline(cfg)
        payload = json.loads((result.output_dir / "metrics.json").read_text())
        assert payload["trainer"] == "BR"
        assert payload["final"]["perf"] <= payload["initial"]["perf"]
        history = (result.output_dir / "history.csv").read_text().splitlines()
        assert history[1].count(",") == 6 and not history[1].endswith(",,,")

    def test_determinism_byte_identical(self, tmp_path):
        cfg_a = RunConfig.from_dict(quick_config(tmp_path, output_dir=str(tmp_path / "a")))
        cfg_b = RunConfig.from_dict(quick_config(tmp_path, output_dir=str(tmp_path / "b")))
        run_pipeline(cfg_a)
        run_pipeline(cfg_b)
        for name in ("metrics.json", "sweep.csv", "awb_trace.json", "model.json",
                     "predictions.csv", "selection.json", "data.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCli:
    def test_generate_and_split(self, tmp_path, capsys):
        out = tmp_path / "data.csv"
        assert cli.main(["generate", "--n", "50", "--seed", "7", "--noise", "0.5",
                         "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "rpm,load,oil_temp,oil_pressure_kPa"
        assert len(lines) == 51

        capsys.readouterr()  # drop the generate message
        assert cli.main(["split", "--n", "10"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["train"] == [0, 1, 2, 5, 6, 7]
        assert payload["val"] == [3, 8] and payload["test"] == [4, 9]

    def test_split_from_csv_file(self, tmp_path, capsys):
        out = tmp_path / "data.csv"
        cli.main(["generate", "--n", "25", "--seed", "1", "--out", str(out)])
        split_path = tmp_path / "split.json"
        assert cli.main(["split", "--data", str(out), "--out", str(split_path)]) == 0
        assert json.loads(split_path.read_text())["n"] == 25

    def test_train_subcommand(self, tmp_path, capsys):
        config = write_config(tmp_path, set_id=2, neurons=3)
        assert cli.main(["train", "--config", str(config)]) == 0
        out = tmp_path / "out"
        assert (out / "model.json").exists() and (out / "history.csv").exists()

    def test_neuron_search_subcommand(self, tmp_path):
        config = write_config(tmp_path)
        assert cli.main(["neuron-search", "--config", str(config)]) == 0
        selection = json.loads((tmp_path / "out" / "selection.json").read_text())
        assert selection["winner"]["set"] in range(1, 7)

    def test_awb_subcommand_with_quantity_subset(self, tmp_path):
        config = write_config(tmp_path, set_id=1, neurons=3)
        assert cli.main(["awb", "--config", str(config), "--quantities", "IW,LW"]) == 0
        traces = json.loads((tmp_path / "out" / "awb_trace.json").read_text())
        assert [t["quantity"] for t in traces] == ["IW", "LW"]

    def test_awb_requires_set_and_neurons(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert cli.main(["awb", "--config", str(config)]) == 2
        assert "config-error" in capsys.readouterr().err

    def test_run_subcommand_and_flag_overrides(self, tmp_path):
        config = write_config(tmp_path)
        out2 = tmp_path / "other"
        assert cli.main(["run", "--config", str(config), "--out", str(out2),
                         "--neuron-max", "3"]) == 0
        assert (out2 / "metrics.json").exists()
        echo = json.loads((out2 / "run_config.json").read_text())
        assert echo["neuron_max"] == 3

    def test_exit_code_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"bogus_key": 1}), encoding="utf-8")
        assert cli.main(["run", "--config", str(bad)]) == 2
        err = capsys.readouterr().err
        assert err.startswith("sensorlab: config-error:") and err.count("\n") == 1

    def test_synthetic_flags_displace_configured_data_path(self, tmp_path):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"data_path": str(tmp_path / "absent.csv"),
                                      "set_id": 2, "neurons": 3, "jobs": 1,
                                      "profile": "quick",
                                      "output_dir": str(tmp_path / "out")}),
                          encoding="utf-8")
        assert cli.main(["train", "--config", str(config), "--synthetic-n", "200",
                         "--synthetic-seed", "4"]) == 0
        assert (tmp_path / "out" / "model.json").exists()

    def test_exit_code_data_error(self, tmp_path, capsys):
        config = write_config(tmp_path)
        payload = json.loads(config.read_text())
        payload.pop("synthetic")
        payload["data_path"] = str(tmp_path / "missing.csv")
        config.write_text(json.dumps(payload), encoding="utf-8")
        assert cli.main(["run", "--config", str(config)]) == 3
        assert "data-error" in capsys.readouterr().err

    def test_exit_code_numeric_abort(self, monkeypatch, capsys):
        def boom(args):
            raise TrainingAbort("non-finite loss at epoch 3")
        monkeypatch.setitem(cli._HANDLERS, "run", boom)
        assert cli.main(["run"]) == 4
        assert "numeric-error" in capsys.readouterr().err

    def test_module_entry_point(self):
        result = subprocess.run([sys.executable, "-m", "sensorlab", "--help"],
                                capture_output=True, text=True)
        assert result.returncode == 0
        assert "generate" in result.stdout and "neuron-search" in result.stdout

    def test_generate_subprocess_round_trip(self, tmp_path):
        out = tmp_path / "gen.csv"
        result = subprocess.run(
            [sys.executable, "-m", "sensorlab", "generate", "--n", "20", "--seed", "3",
             "--out", str(out)], capture_output=True, text=True)
        assert result.returncode == 0
        assert out.exists()


class TestReport:
    def test_report_renders_figures(self, tmp_path, capsys):
        config = write_config(tmp_path, set_id=1, neurons=3)
        assert cli.main(["run", "--config", str(config)]) == 0
        out = tmp_path / "out"
        assert cli.main(["report", "--run-dir", str(out)]) == 0
        for name in ("predictions_overlay.png", "accuracy.png", "awb_trace.png"):
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "initial:" in stdout and "final:" in stdout

    def test_report_with_sweep_figure(self, tmp_path):
        config = write_config(tmp_path)
        assert cli.main(["run", "--config", str(config), "--figures"]) == 0
        assert (tmp_path / "out" / "sweep.png").exists()

    def test_report_missing_dir_is_data_error(self, tmp_path, capsys):
        assert cli.main(["report", "--run-dir", str(tmp_path / "nope")]) == 3

    def test_report_to_separate_dir(self, tmp_path):
        config = write_config(tmp_path, set_id=1, neurons=3, awb_quantities=[])
        cli.main(["run", "--config", str(config)])
        figs = tmp_path / "figs"
        assert cli.main(["report", "--run-dir", str(tmp_path / "out"),
                         "--out-dir", str(figs)]) == 0
        assert (figs / "predictions_overlay.png").exists()
