"""Command-line interface.

Subcommands: fit-source, make-target, transfer, eval, experiment,
gen-config.  All randomness flows from ``--seed``; exit codes are 0 on
success, 1 on configuration errors, and 2 when an experiment finished
with failed repetitions (partial results are still written).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .benchmarks import BENCH_IDS, BenchFn, make_target, sample_dataset, sample_instance
from .harness import (
    ExperimentConfig,
    read_dataset_csv,
    run_experiment,
    smape,
    write_dataset_csv,
    write_results_csv,
)
from .optimizer import CmaConfig, GdSchedule
from .surrogate import GprRegressor, load_model, save_model
from .transfer import (
    fit_transfer_cmaes,
    fit_transfer_gd,
    load_transfer_params,
    save_transfer_params,
    transferred_predict,
)
from .warp import WARP_SHAPES, Box, warp_prior_preset


class ConfigError(Exception):
    """Bad command-line arguments or configuration file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="warptransfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit-source", help="fit a source GPR surrogate")
    fit.add_argument("--data", help="training CSV with header x1,...,xd,y")
    fit.add_argument("--function", choices=BENCH_IDS, help="benchmark to sample instead of --data")
    fit.add_argument("--dimension", type=int, default=2)
    fit.add_argument("--samples", type=int, default=200, help="sample count with --function")
    fit.add_argument("--restarts", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="output model JSON")

    target = sub.add_parser("make-target", help="sample a synthetic target task")
    target.add_argument("--function", choices=BENCH_IDS, help="benchmark source")
    target.add_argument("--model", help="fitted surrogate JSON used as the source")
    target.add_argument("--dimension", type=int, default=2)
    target.add_argument("--shape", choices=WARP_SHAPES, default="exponential")
    target.add_argument("--seed", type=int, default=0)
    target.add_argument("--out", required=True, help="ground-truth transformation JSON")
    target.add_argument("--samples", type=int, help="also sample a transfer CSV of this size")
    target.add_argument("--data-out", help="transfer CSV path (with --samples)")
    target.add_argument("--test-samples", type=int, help="also sample a test CSV of this size")
    target.add_argument("--test-out", help="test CSV path (with --test-samples)")

    trans = sub.add_parser("transfer", help="fit the transformation from transfer data")
    trans.add_argument("--model", required=True, help="source surrogate JSON")
    trans.add_argument("--data", required=True, help="transfer CSV")
    trans.add_argument("--method", choices=("gd", "cmaes"), default="gd")
    trans.add_argument("--seed", type=int, default=0)
    trans.add_argument("--out", required=True, help="fitted transformation JSON")
    trans.add_argument("--lr0", type=float, default=0.1)
    trans.add_argument("--decay", type=float, default=0.05)
    trans.add_argument("--epochs", type=int, default=80)
    trans.add_argument("--batch-fraction", type=float, default=0.15)
    trans.add_argument("--restarts", type=int, default=5)
    trans.add_argument("--budget", type=int, default=6000)
    trans.add_argument("--sigma0", type=float, default=0.5)
    trans.add_argument("--in-domain", action="store_true",
                       help="train only on rows whose image stays inside the model box")

    ev = sub.add_parser("eval", help="report SMAPE of a model on a test CSV")
    ev.add_argument("--model", required=True, help="surrogate JSON")
    ev.add_argument("--data", required=True, help="test CSV")
    ev.add_argument("--params", help="transformation JSON; evaluates the transferred model")
    ev.add_argument("--holdout", help="transfer CSV whose rows are excluded from the test set")

    exp = sub.add_parser("experiment", help="run the comparison protocol from a config file")
    exp.add_argument("--config", required=True, help="flat key=value config file")
    exp.add_argument("--out", help="results CSV (overrides the config's output key)")

    gen = sub.add_parser("gen-config", help="write a default experiment config")
    gen.add_argument("--out", required=True)
    return parser


_CONFIG_TEMPLATE = """\
# warptransfer experiment configuration (key=value; '#' starts a comment)
functions=sphere
dimension=2
shape=exponential
sizes=20
repetitions=10
seed=0
fitter=gd
in_domain=false
source_multiplier=400
test_multiplier=400
box_lo=-5
box_hi=5
gpr_restarts=5
gd_lr0=0.1
gd_decay=0.05
gd_epochs=80
gd_batch_fraction=0.15
gd_restarts=5
cma_budget=6000
cma_sigma0=0.5
timing=false
output=results.csv
"""


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def load_experiment_config(path) -> ExperimentConfig:
    entries = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {line_no}: expected key=value")
                key, value = line.split("=", 1)
                entries[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        gd = GdSchedule(
            lr0=float(entries.pop("gd_lr0", 0.1)),
            decay=float(entries.pop("gd_decay", 0.05)),
            epochs=int(entries.pop("gd_epochs", 80)),
            batch_fraction=float(entries.pop("gd_batch_fraction", 0.15)),
            restarts=int(entries.pop("gd_restarts", 5)),
        )
        cma = CmaConfig(
            sigma0=float(entries.pop("cma_sigma0", 0.5)),
            budget=int(entries.pop("cma_budget", 6000)),
        )
        config = ExperimentConfig(
            functions=tuple(
                name.strip() for name in entries.pop("functions", "sphere").split(",") if name.strip()
            ),
            dimension=int(entries.pop("dimension", 2)),
            shape=entries.pop("shape", "exponential"),
            transfer_sizes=tuple(
                int(s) for s in entries.pop("sizes", "20").split(",") if s.strip()
            ),
            repetitions=int(entries.pop("repetitions", 10)),
            base_seed=int(entries.pop("seed", 0)),
            fitter=entries.pop("fitter", "gd"),
            in_domain=_parse_bool(entries.pop("in_domain", "false")),
            source_multiplier=int(entries.pop("source_multiplier", 400)),
            test_multiplier=int(entries.pop("test_multiplier", 400)),
            box_lo=float(entries.pop("box_lo", -5.0)),
            box_hi=float(entries.pop("box_hi", 5.0)),
            gpr_restarts=int(entries.pop("gpr_restarts", 5)),
            gd=gd,
            cma=cma,
            record_timing=_parse_bool(entries.pop("timing", "false")),
            output_path=entries.pop("output", None),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if entries:
        raise ConfigError(f"{path}: unknown config keys: {sorted(entries)}")
    return config


def _cmd_fit_source(args) -> int:
    if bool(args.data) == bool(args.function):
        raise ConfigError("provide exactly one of --data or --function")
    rng = np.random.default_rng(args.seed)
    if args.data:
        data = read_dataset_csv(args.data)
    else:
        bench = BenchFn(args.function, args.dimension)
        data = sample_dataset(bench, args.samples, Box.cube(-5.0, 5.0, args.dimension), rng)
    model = GprRegressor(n_restarts=args.restarts, box=data.box, random_state=rng)
    model.fit(data.X, data.y)
    save_model(model, args.out)
    print(f"fitted GPR on {data.n} points (d={data.d}); lml={model.lml_:.4f} -> {args.out}")
    return 0


def _cmd_make_target(args) -> int:
    if bool(args.function) == bool(args.model):
        raise ConfigError("provide exactly one of --function or --model")
    rng = np.random.default_rng(args.seed)
    if args.function:
        source = BenchFn(args.function, args.dimension)
        box = Box.cube(-5.0, 5.0, args.dimension)
    else:
        source = load_model(args.model)
        box = source.box_
    gen = sample_instance(warp_prior_preset(args.shape), box.d, box, rng)
    save_transfer_params(gen, args.out)
    target = make_target(source, gen)
    if args.samples:
        if not args.data_out:
            raise ConfigError("--samples requires --data-out")
        write_dataset_csv(sample_dataset(target, args.samples, box, rng), args.data_out)
    if args.test_samples:
        if not args.test_out:
            raise ConfigError("--test-samples requires --test-out")
        write_dataset_csv(sample_dataset(target, args.test_samples, box, rng), args.test_out)
    print(f"sampled {args.shape} target transformation -> {args.out}")
    return 0


def _cmd_transfer(args) -> int:
    model = load_model(args.model)
    data = read_dataset_csv(args.data, box=model.box_)
    if args.in_domain:
        raise ConfigError(
            "--in-domain needs ground-truth parameters and applies to experiments only"
        )
    rng = np.random.default_rng(args.seed)
    if args.method == "gd":
        schedule = GdSchedule(
            lr0=args.lr0,
            decay=args.decay,
            epochs=args.epochs,
            batch_fraction=args.batch_fraction,
            restarts=args.restarts,
        )
        report = fit_transfer_gd(model, data, schedule, rng)
    else:
        report = fit_transfer_cmaes(model, data, CmaConfig(sigma0=args.sigma0, budget=args.budget), rng)
    save_transfer_params(report.best_params, args.out)
    print(
        f"fitted {args.method} transfer on {data.n} rows: loss={report.best_loss:.6g} "
        f"(restart {report.restart_index}, {report.evaluations} evaluations) -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    data = read_dataset_csv(args.data, box=model.box_)
    X, y = data.X, data.y
    if args.holdout:
        held = read_dataset_csv(args.holdout, box=model.box_)
        keep = ~np.array([any(np.array_equal(row, h) for h in held.X) for row in X])
        X, y = X[keep], y[keep]
        if X.shape[0] == 0:
            raise ConfigError("holdout removed every test row")
    if args.params:
        params = load_transfer_params(args.params)
        preds = transferred_predict(model, params, X)
        label = "transferred"
    else:
        preds = model.predict(X)
        label = "model"
    value = smape(preds, y)
    print(f"{label} smape={value!r} on {X.shape[0]} rows")
    return 0


def _cmd_experiment(args) -> int:
    config = load_experiment_config(args.config)
    if args.out:
        config.output_path = args.out
    if config.output_path is None:
        raise ConfigError("no output path: set output= in the config or pass --out")
    result = run_experiment(config)
    write_results_csv(result, config.output_path)
    failures = [row for row in result.rows if row.status != "ok"]
    print(
        f"wrote {len(result.rows)} rows to {config.output_path}"
        + (f" ({len(failures)} failed)" if failures else "")
    )
    return 2 if failures else 0


def _cmd_gen_config(args) -> int:
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(_CONFIG_TEMPLATE)
    print(f"wrote default config to {args.out}")
    return 0


_COMMANDS = {
    "fit-source": _cmd_fit_source,
    "make-target": _cmd_make_target,
    "transfer": _cmd_transfer,
    "eval": _cmd_eval,
    "experiment": _cmd_experiment,
    "gen-config": _cmd_gen_config,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
