"""Command-line interface.

Subcommands: generate, split, train, neuron-search, awb, run, report.
A run is configured by a JSON file; every config key has a flag override.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric abort.
"""
from __future__ import annotations

import argparse
import functools
import json
import sys
from pathlib import Path

from .awb import AwbContext, save_traces_csv, save_traces_json, tune_all
from .dataset import DataError, fit_apply_scaler, interleaved_split, load_csv, save_csv
from .evaluation import EvalProblem, default_jobs, evaluate_config
from .metrics import Metrics
from .netcore import config_for_set, save_model
from .neuron_search import run_search, sweep_to_csv
from .pipeline import (ConfigError, RunConfig, _run_schedule, resolve_dataset,
                       run_pipeline, write_predictions_csv)
from .synthetic import EngineGenSpec, generate_engine_dataset
from .trainers import TrainingAbort, history_to_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _fail(kind: str, message: str, code: int) -> int:
    print(f"sensorlab: {kind}-error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensorlab",
        description="Virtual-sensor modelling: configured feedforward networks, "
                    "neuron-count search and adaptive coefficient tuning.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic engine dataset as CSV")
    gen.add_argument("--n", type=int, required=True, help="number of samples")
    gen.add_argument("--seed", type=int, required=True, help="generator seed")
    gen.add_argument("--noise", type=float, default=0.0, help="target noise SD in kPa")
    gen.add_argument("--out", required=True, help="output CSV path")

    spl = sub.add_parser("split", help="print or write the interleaved 60/20/20 division")
    group = spl.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=int, help="sample count")
    group.add_argument("--data", help="CSV file to take the sample count from")
    spl.add_argument("--target-column", default="oil_pressure_kPa")
    spl.add_argument("--out", help="output JSON path (stdout if omitted)")

    for name, helptext in (("train", "train one configured network"),
                           ("neuron-search", "run the six-set neuron sweep and selection"),
                           ("awb", "tune configured coefficients for a fixed set/neurons"),
                           ("run", "full pipeline: search, train, tune, report")):
        cmd = sub.add_parser(name, help=helptext)
        _add_config_flags(cmd)
        if name == "run":
            cmd.add_argument("--figures", action="store_true",
                             help="also render report figures into the output directory")

    rep = sub.add_parser("report", help="render figures for an existing run directory")
    rep.add_argument("--run-dir", required=True)
    rep.add_argument("--out-dir", default=None,
                     help="where to write figures (default: the run directory)")
    return parser


def _add_config_flags(cmd: argparse.ArgumentParser) -> None:
    cmd.add_argument("--config", help="run config JSON file")
    cmd.add_argument("--data", dest="data_path", help="input CSV path")
    cmd.add_argument("--synthetic-n", type=int)
    cmd.add_argument("--synthetic-seed", type=int)
    cmd.add_argument("--synthetic-noise", type=float)
    cmd.add_argument("--target-column")
    cmd.add_argument("--trainer", choices=["LM", "BR", "lm", "br"])
    cmd.add_argument("--neuron-min", type=int)
    cmd.add_argument("--neuron-max", type=int)
    cmd.add_argument("--set", dest="set_id", type=int, help="configured set id 1..6")
    cmd.add_argument("--neurons", type=int, help="hidden neuron count")
    cmd.add_argument("--max-epochs", type=int)
    cmd.add_argument("--mu0", type=float)
    cmd.add_argument("--mu-inc", type=float)
    cmd.add_argument("--mu-dec", type=float)
    cmd.add_argument("--mu-max", type=float)
    cmd.add_argument("--max-fail", type=int)
    cmd.add_argument("--min-grad", type=float)
    cmd.add_argument("--quantities", help="comma-separated subset of IW,B1,B2,LW")
    cmd.add_argument("--profile", choices=["full", "quick"])
    cmd.add_argument("--jobs", type=int)
    cmd.add_argument("--out", dest="output_dir", help="output directory")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    payload: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        payload.update(loaded)

    synth = dict(payload.get("synthetic") or {})
    synth_flags = False
    for flag, key in (("synthetic_n", "n"), ("synthetic_seed", "seed"),
                      ("synthetic_noise", "noise_sd")):
        value = getattr(args, flag, None)
        if value is not None:
            synth[key] = value
            synth_flags = True
    if synth:
        payload["synthetic"] = synth
    for flag in ("data_path", "target_column", "trainer", "neuron_min", "neuron_max",
                 "set_id", "neurons", "profile", "jobs", "output_dir"):
        value = getattr(args, flag, None)
        if value is not None:
            payload[flag] = value
    # an explicit flag for one data source displaces the other from the config file
    if getattr(args, "data_path", None) is not None:
        payload.pop("synthetic", None)
    elif synth_flags:
        payload.pop("data_path", None)
    opts = dict(payload.get("train_options") or {})
    for flag in ("max_epochs", "mu0", "mu_inc", "mu_dec", "mu_max", "max_fail", "min_grad"):
        value = getattr(args, flag, None)
        if value is not None:
            opts[flag] = value
    if opts:
        payload["train_options"] = opts
    if getattr(args, "quantities", None) is not None:
        payload["awb_quantities"] = args.quantities
    return RunConfig.from_dict(payload)


def _prepared(config: RunConfig):
    """Shared front half of the single-stage commands: data, split, scaler."""
    config = config.effective()
    data = resolve_dataset(config)
    split = interleaved_split(data.n)
    scaler, scaled = fit_apply_scaler(data)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return config, data, split, scaler, scaled, out


def cmd_generate(args) -> int:
    spec = EngineGenSpec(n=args.n, seed=args.seed, noise_sd=args.noise)
    data = generate_engine_dataset(spec)
    save_csv(data, args.out)
    print(f"wrote {data.n} samples to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    n = args.n if args.n is not None else load_csv(args.data, args.target_column).n
    payload = interleaved_split(n).to_json_dict()
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote split for n={n} to {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _require_set_and_neurons(config: RunConfig, command: str) -> None:
    if config.set_id is None or config.neurons is None:
        raise ConfigError(f"{command} requires set_id and neurons "
                          f"(--set/--neurons or config keys)")


def cmd_train(args) -> int:
    config, data, split, scaler, scaled, out = _prepared(_config_from_args(args))
    _require_set_and_neurons(config, "train")
    problem = EvalProblem(data=scaled, split=split, n_hidden=config.neurons,
                          kind=config.trainer, opts=config.train_options)
    cfg = config_for_set(config.set_id)
    outcome = evaluate_config(problem, cfg)
    if outcome.failed:
        raise TrainingAbort(outcome.message)
    save_model(out / "model.json", outcome.model.params, cfg, scaler)
    history_to_csv(outcome.model, out / "history.csv")
    write_predictions_csv(out / "predictions.csv", outcome.model.params, scaled)
    _dump_metrics(out / "metrics.json", config, outcome.metrics, outcome.metrics)
    print(f"trained set {config.set_id} with {config.neurons} neurons: "
          f"perf {outcome.metrics.perf:.6g}, countPercent {outcome.metrics.count_percent:.4g}"
          f" -> {out}")
    return EXIT_OK


def cmd_neuron_search(args) -> int:
    config, data, split, scaler, scaled, out = _prepared(_config_from_args(args))
    jobs = config.jobs if config.jobs is not None else default_jobs()
    search = run_search(scaled, split, config.trainer, config.train_options,
                        list(range(config.neuron_min, config.neuron_max + 1)), jobs)
    sweep_to_csv(search.rows, out / "sweep.csv")
    with open(out / "selection.json", "w", encoding="utf-8") as fh:
        json.dump(search.to_json_dict(), fh, indent=2)
        fh.write("\n")
    print(f"winner: set {search.winner_set}, {search.winner_n} neurons -> {out}")
    return EXIT_OK


def cmd_awb(args) -> int:
    config, data, split, scaler, scaled, out = _prepared(_config_from_args(args))
    _require_set_and_neurons(config, "awb")
    jobs = config.jobs if config.jobs is not None else default_jobs()
    problem = EvalProblem(data=scaled, split=split, n_hidden=config.neurons,
                          kind=config.trainer, opts=config.train_options)
    ctx = AwbContext(evaluate=functools.partial(evaluate_config, problem),
                     schedule=_run_schedule(config),
                     config=config_for_set(config.set_id), jobs=jobs)
    initial = ctx.ensure_baseline()
    final_cfg, traces = tune_all(ctx, config.awb_quantities)
    save_traces_json(traces, out / "awb_trace.json")
    save_traces_csv(traces, out / "awb_trace.csv")
    outcome = ctx.eval_cached(final_cfg)
    save_model(out / "model.json", outcome.model.params, final_cfg, scaler)
    write_predictions_csv(out / "predictions.csv", outcome.model.params, scaled)
    _dump_metrics(out / "metrics.json", config, initial, outcome.metrics)
    print(f"tuned {[t.quantity for t in traces]}: perf {initial.perf:.6g} -> "
          f"{outcome.metrics.perf:.6g} -> {out}")
    return EXIT_OK


def _dump_metrics(path, config: RunConfig, initial: Metrics, final: Metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({
            "trainer": config.trainer.value,
            "set": config.set_id,
            "neurons": config.neurons,
            "initial": initial.to_json_dict(),
            "final": final.to_json_dict(),
        }, fh, indent=2)
        fh.write("\n")


def cmd_run(args) -> int:
    config = _config_from_args(args)
    result = run_pipeline(config, render_figures=args.figures)
    print(f"run complete: set {result.winner_set}, {result.winner_n} neurons; "
          f"perf {result.initial_metrics.perf:.6g} -> {result.final_metrics.perf:.6g}; "
          f"artifacts in {result.output_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    from . import report
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise DataError(f"{run_dir}: run directory not found")
    written = report.render_run(run_dir, args.out_dir)
    if not written:
        raise DataError(f"{run_dir}: no renderable artifacts found")
    metrics_path = run_dir / "metrics.json"
    if metrics_path.exists():
        payload = json.loads(metrics_path.read_text(encoding="utf-8"))
        for stage in ("initial", "final"):
            m = payload.get(stage)
            if m:
                print(f"{stage}: perf {m['perf']:.6g} (rmse {m['perf'] ** 0.5:.6g}), "
                      f"countPercent {m['countPercent']:.4g}, range {m['range']:.6g}, "
                      f"rsq {m['rsq']:.6f}")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


_HANDLERS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "neuron-search": cmd_neuron_search,
    "awb": cmd_awb,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except DataError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except (TrainingAbort, FloatingPointError) as exc:
        return _fail("numeric", str(exc), EXIT_NUMERIC)
    except json.JSONDecodeError as exc:
        return _fail("config", f"invalid JSON: {exc}", EXIT_CONFIG)
    except FileNotFoundError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except ValueError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
