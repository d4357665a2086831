"""End-to-end run orchestration and artifact writing.

A run is driven by a RunConfig (JSON file, every key overridable from the
CLI) and produces a directory of artifacts: the resolved config echo, the
generated or loaded data, split/scaler/ranking files, the neuron-search sweep
and selection, the trained model, metrics before and after coefficient
tuning, the tuning trace, and a predictions table ready for plotting.

All artifacts are content-deterministic: floats are serialized with
round-trip precision and timestamps go only to the run log.
"""
from __future__ import annotations

import csv
import functools
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import awb as awb_mod
from .awb import AwbContext, Quantity, schedule_for
from .dataset import (Dataset, fit_apply_scaler, interleaved_split, load_csv,
                      rank_inputs, save_csv)
from .evaluation import EvalProblem, default_jobs, evaluate_config
from .metrics import Metrics, accuracies
from .netcore import config_for_set, predict, save_model
from .neuron_search import NEURON_MAX, NEURON_MIN, run_search, sweep_to_csv
from .synthetic import EngineGenSpec, generate_engine_dataset
from .trainers import TrainerKind, TrainOptions, history_to_csv

PROFILES = ("full", "quick")
QUICK_MAX_EPOCHS = 50
QUICK_NEURON_RANGE = (2, 12)


class ConfigError(ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""


_TRAIN_OPTION_KEYS = ("max_epochs", "mu0", "mu_inc", "mu_dec", "mu_max", "max_fail", "min_grad")
_SYNTHETIC_KEYS = ("n", "seed", "noise_sd")
_CONFIG_KEYS = ("data_path", "synthetic", "target_column", "trainer", "neuron_min",
                "neuron_max", "set_id", "neurons", "train_options", "awb_quantities",
                "profile", "jobs", "output_dir")


@dataclass
class RunConfig:
    data_path: str | None = None
    synthetic: dict | None = None
    target_column: str = "oil_pressure_kPa"
    trainer: TrainerKind = TrainerKind.LM
    neuron_min: int = NEURON_MIN
    neuron_max: int = NEURON_MAX
    set_id: int | None = None
    neurons: int | None = None
    train_options: TrainOptions = field(default_factory=TrainOptions)
    awb_quantities: tuple[Quantity, ...] = tuple(awb_mod.QUANTITY_ORDER)
    profile: str = "full"
    jobs: int | None = None
    output_dir: str = "run_output"
    # keys the caller set explicitly; the quick profile only fills the rest
    explicit: frozenset = field(default_factory=frozenset, repr=False, compare=False)

    def __post_init__(self):
        if (self.data_path is None) == (self.synthetic is None):
            raise ConfigError("exactly one of data_path and synthetic must be set")
        if self.synthetic is not None:
            unknown = set(self.synthetic) - set(_SYNTHETIC_KEYS)
            if unknown:
                raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
            if not {"n", "seed"} <= set(self.synthetic):
                raise ConfigError("synthetic requires keys n and seed")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}, got {self.profile!r}")
        if not (NEURON_MIN <= self.neuron_min <= self.neuron_max <= NEURON_MAX):
            raise ConfigError(
                f"neuron range [{self.neuron_min}, {self.neuron_max}] must sit inside "
                f"[{NEURON_MIN}, {NEURON_MAX}]")
        if self.set_id is not None and self.set_id not in range(1, 7):
            raise ConfigError(f"set_id must be 1..6, got {self.set_id}")
        if self.neurons is not None and not (NEURON_MIN <= self.neurons <= NEURON_MAX):
            raise ConfigError(f"neurons must be in [{NEURON_MIN}, {NEURON_MAX}], got {self.neurons}")
        if (self.set_id is None) != (self.neurons is None):
            raise ConfigError("set_id and neurons must be configured together")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        unknown = set(payload) - set(_CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(payload)
        explicit = set(payload)
        if isinstance(payload.get("train_options"), dict):
            explicit |= {f"train_options.{k}" for k in payload["train_options"]}
        kwargs["explicit"] = frozenset(explicit)
        if "trainer" in kwargs:
            kwargs["trainer"] = _parse_trainer(kwargs["trainer"])
        if "awb_quantities" in kwargs:
            kwargs["awb_quantities"] = parse_quantities(kwargs["awb_quantities"])
        if "train_options" in kwargs:
            opts = kwargs["train_options"]
            unknown = set(opts) - set(_TRAIN_OPTION_KEYS)
            if unknown:
                raise ConfigError(f"unknown train_options keys: {sorted(unknown)}")
            try:
                kwargs["train_options"] = TrainOptions(**opts)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(payload)

    def effective(self) -> "RunConfig":
        """Apply profile adjustments (quick: short training, narrow neuron range).

        Explicitly configured values win over the profile.
        """
        if self.profile != "quick":
            return self
        cfg = RunConfig(**{**self.__dict__})
        if "train_options.max_epochs" not in self.explicit:
            cfg.train_options = TrainOptions(**{**_opts_dict(self.train_options),
                                                "max_epochs": QUICK_MAX_EPOCHS})
        if "neuron_min" not in self.explicit:
            cfg.neuron_min = QUICK_NEURON_RANGE[0]
        if "neuron_max" not in self.explicit:
            cfg.neuron_max = max(QUICK_NEURON_RANGE[1], cfg.neuron_min)
        return cfg

    def to_json_dict(self) -> dict:
        return {
            "data_path": self.data_path,
            "synthetic": self.synthetic,
            "target_column": self.target_column,
            "trainer": self.trainer.value,
            "neuron_min": self.neuron_min,
            "neuron_max": self.neuron_max,
            "set_id": self.set_id,
            "neurons": self.neurons,
            "train_options": _opts_dict(self.train_options),
            "awb_quantities": [q.value for q in self.awb_quantities],
            "profile": self.profile,
            "jobs": self.jobs,
            "output_dir": self.output_dir,
        }


def _opts_dict(opts: TrainOptions) -> dict:
    return {k: getattr(opts, k) for k in _TRAIN_OPTION_KEYS}


def _parse_trainer(value) -> TrainerKind:
    if isinstance(value, TrainerKind):
        return value
    try:
        return TrainerKind(str(value).upper())
    except ValueError:
        raise ConfigError(f"trainer must be LM or BR, got {value!r}") from None


def parse_quantities(value) -> tuple[Quantity, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    try:
        quantities = tuple(Quantity(str(v).upper()) for v in value)
    except ValueError as exc:
        raise ConfigError(f"invalid AWB quantity: {exc}") from None
    seen = []
    for q in quantities:
        if q not in seen:
            seen.append(q)
    return tuple(seen)


@dataclass
class PipelineResult:
    output_dir: Path
    winner_set: int | None
    winner_n: int
    initial_metrics: Metrics
    final_metrics: Metrics
    artifacts: dict[str, Path]


class RunLog:
    """Timestamped progress log; the only artifact allowed to vary between runs."""

    def __init__(self, path: Path):
        self._fh = open(path, "w", encoding="utf-8")
        self._t0 = time.monotonic()

    def write(self, message: str) -> None:
        elapsed = time.monotonic() - self._t0
        self._fh.write(f"[{time.strftime('%Y-%m-%dT%H:%M:%S')}] (+{elapsed:8.2f}s) {message}\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def resolve_dataset(config: RunConfig) -> Dataset:
    if config.data_path is not None:
        return load_csv(config.data_path, config.target_column)
    spec = EngineGenSpec(n=int(config.synthetic["n"]), seed=int(config.synthetic["seed"]),
                         noise_sd=float(config.synthetic.get("noise_sd", 0.0)))
    return generate_engine_dataset(spec)


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_predictions_csv(path, params, data: Dataset) -> None:
    """index, target, prediction, accuracy rows for the full dataset."""
    preds = predict(params, data.inputs)
    acc = accuracies(preds, data.targets)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "target", "prediction", "accuracy"])
        for i in range(data.n):
            writer.writerow([i, repr(float(data.targets[i])),
                             repr(float(preds[i])), repr(float(acc[i]))])


def write_ranking_csv(path, ranking) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input", "r", "flags"])
        for item in ranking:
            writer.writerow([item.name, repr(item.r),
                             "zero_variance" if item.zero_variance else ""])


def run_pipeline(config: RunConfig, render_figures: bool = False) -> PipelineResult:
    """Execute load/generate -> split -> scale -> search -> train -> tune -> report."""
    config = config.effective()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(out / "run.log")
    artifacts: dict[str, Path] = {"run_log": out / "run.log"}
    jobs = config.jobs if config.jobs is not None else default_jobs()
    try:
        _write_json(out / "run_config.json", config.to_json_dict())
        artifacts["run_config"] = out / "run_config.json"

        raw = resolve_dataset(config)
        if config.synthetic is not None:
            save_csv(raw, out / "data.csv")
            artifacts["data"] = out / "data.csv"
        log.write(f"dataset ready: {raw.n} rows, {raw.d} inputs, target {raw.target_name!r}")

        ranking = rank_inputs(raw)
        write_ranking_csv(out / "ranking.csv", ranking)
        artifacts["ranking"] = out / "ranking.csv"

        split = interleaved_split(raw.n)
        _write_json(out / "split.json", split.to_json_dict())
        artifacts["split"] = out / "split.json"

        scaler, scaled = fit_apply_scaler(raw)
        scaler.save(out / "scaler.json")
        artifacts["scaler"] = out / "scaler.json"

        if config.set_id is not None and config.neurons is not None:
            winner_set, winner_n = config.set_id, config.neurons
            log.write(f"search skipped; configured set {winner_set}, {winner_n} neurons")
        else:
            n_values = list(range(config.neuron_min, config.neuron_max + 1))
            log.write(f"neuron search: sets 1-6, n in [{n_values[0]}, {n_values[-1]}], "
                      f"trainer {config.trainer.value}, jobs {jobs}")
            search = run_search(scaled, split, config.trainer, config.train_options,
                                n_values, jobs)
            sweep_to_csv(search.rows, out / "sweep.csv")
            _write_json(out / "selection.json", search.to_json_dict())
            artifacts["sweep"] = out / "sweep.csv"
            artifacts["selection"] = out / "selection.json"
            winner_set, winner_n = search.winner_set, search.winner_n
            log.write(f"search winner: set {winner_set}, {winner_n} neurons")

        problem = EvalProblem(data=scaled, split=split, n_hidden=winner_n,
                              kind=config.trainer, opts=config.train_options)
        evaluate = functools.partial(evaluate_config, problem)
        start_cfg = config_for_set(winner_set)
        ctx = AwbContext(evaluate=evaluate, schedule=_run_schedule(config),
                         config=start_cfg, jobs=jobs)
        initial = ctx.ensure_baseline()
        log.write(f"baseline metrics: perf {initial.perf:.6g}, "
                  f"countPercent {initial.count_percent:.4g}, range {initial.range:.6g}, "
                  f"rsq {initial.rsq:.6f}")

        if config.awb_quantities:
            log.write(f"coefficient tuning: {[q.value for q in config.awb_quantities]}")
            final_cfg, traces = awb_mod.tune_all(ctx, config.awb_quantities)
            awb_mod.save_traces_json(traces, out / "awb_trace.json")
            awb_mod.save_traces_csv(traces, out / "awb_trace.csv")
            artifacts["awb_trace"] = out / "awb_trace.json"
            artifacts["awb_trace_csv"] = out / "awb_trace.csv"
        else:
            final_cfg, traces = start_cfg, []

        final_outcome = ctx.eval_cached(final_cfg)
        if final_outcome.failed:
            raise RuntimeError(f"final configuration failed to train: {final_outcome.message}")
        final = final_outcome.metrics
        model = final_outcome.model
        log.write(f"final metrics: perf {final.perf:.6g}, "
                  f"countPercent {final.count_percent:.4g}, range {final.range:.6g}, "
                  f"rsq {final.rsq:.6f}")

        save_model(out / "model.json", model.params, final_cfg, scaler)
        history_to_csv(model, out / "history.csv")
        write_predictions_csv(out / "predictions.csv", model.params, scaled)
        _write_json(out / "metrics.json", {
            "trainer": config.trainer.value,
            "set": winner_set,
            "neurons": winner_n,
            "initial": initial.to_json_dict(),
            "final": final.to_json_dict(),
        })
        artifacts.update(model=out / "model.json", history=out / "history.csv",
                         predictions=out / "predictions.csv", metrics=out / "metrics.json")

        if render_figures:
            from . import report
            figures = report.render_run(out)
            log.write(f"figures: {[p.name for p in figures]}")

        log.write("run complete")
    finally:
        log.close()
    return PipelineResult(output_dir=out, winner_set=winner_set, winner_n=winner_n,
                          initial_metrics=initial, final_metrics=final, artifacts=artifacts)


def _run_schedule(config: RunConfig):
    # The quick profile always uses the coarser BR grids to keep runs short.
    if config.profile == "quick":
        return awb_mod.BR_STEPS
    return schedule_for(config.trainer)
