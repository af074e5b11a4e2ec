"""Command-line interface.

Subcommands mirror the pipeline stages (`run` executes them all in order);
`synth` writes a standalone synthetic panel and `enumerate` can print the
constrained formula list without a run directory. Exit codes: 0 success,
2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .catalog import modeling_catalog
from .config import RunConfig, apply_overrides, from_ini, replace_config, to_ini
from .data import emit_table
from .ensemble import GateConfig
from .errors import ConfigError, VegcastError
from .modelspace import enumerate_constrained, format_formula
from .pipeline import STAGES, RunContext, run_pipeline, run_stage
from .synth import SynthConfig, generate_synthetic

_STAGE_COMMANDS = {
    "ingest": "data",
    "indices": "indices",
    "select-vars": "select_vars",
    "train": "train",
    "gate": "gate",
    "prune": "prune",
    "ensemble": "ensemble",
    "evaluate": "evaluate",
    "report": "report",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vegcast",
        description=(
            "Over-produce/select/combine model ensembles for one-month-ahead "
            "vegetation condition prediction."
        ),
    )
    parser.add_argument("--config", help="path to a config INI file")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--out", help="run directory (overrides config)")
    parser.add_argument("--threads", type=int, help="worker processes for training")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config value (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic panel CSV")
    p.add_argument("--units", type=int, default=4)
    p.add_argument("--months", type=int, default=204)
    p.add_argument("--start", default="2001-03")
    p.add_argument("--to", default="-", help="output CSV path ('-' = stdout)")

    p = sub.add_parser("enumerate", help="list constrained model formulas")
    p.add_argument("--catalog", default="default", help="'default' or rainfall source tag")

    p = sub.add_parser("ingest", help="validate and stage an input panel")
    p.add_argument("--input", required=True, help="input CSV path")

    for command in ("indices", "select-vars", "train", "prune", "ensemble", "evaluate", "report"):
        sub.add_parser(command, help=f"run the {command.replace('-', ' ')} stage")

    p = sub.add_parser("gate", help="run the quality gate stage")
    p.add_argument("--r2-min", type=float, help="validation R2 cutoff")
    p.add_argument("--overfit-tol", type=float, help="allowed train-over-validation gap")

    sub.add_parser("run", help="run the full pipeline")
    return parser


def _load_config(args) -> RunConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = from_ini(fh.read())
    else:
        candidate = os.path.join(args.out or "run", "config.ini")
        if os.path.exists(candidate):
            with open(candidate, "r", encoding="utf-8") as fh:
                config = from_ini(fh.read())
        else:
            config = RunConfig()
    config = apply_overrides(config, args.overrides)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if args.threads is not None:
        updates["threads"] = args.threads
    if updates:
        config = replace_config(config, **updates)
    return config


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except VegcastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    if args.command == "synth":
        seed = args.seed if args.seed is not None else 0
        table = generate_synthetic(
            SynthConfig(units=args.units, months=args.months, seed=seed, start=args.start)
        )
        text = emit_table(table)
        if args.to == "-":
            sys.stdout.write(text)
        else:
            with open(args.to, "w", encoding="utf-8") as fh:
                fh.write(text)
        return 0

    if args.command == "enumerate":
        source = "TAMSAT" if args.catalog == "default" else args.catalog
        catalog = modeling_catalog(source=source)
        for formula in enumerate_constrained(catalog):
            print(format_formula(formula))
        return 0

    config = _load_config(args)

    if args.command == "ingest":
        config = replace_config(config, input_path=args.input)
        ctx = RunContext(config)
        os.makedirs(ctx.run_dir, exist_ok=True)
        from .pipeline import _write  # reuse the atomic text writer

        _write(ctx.path("config.ini"), to_ini(config))
        run_stage(ctx, "data", force=True)
        print(f"ingested {args.input} into {ctx.run_dir}")
        return 0

    if args.command == "gate":
        gate = config.gate
        if args.r2_min is not None:
            gate = replace(gate, r2_min=args.r2_min)
        if args.overfit_tol is not None:
            gate = replace(gate, overfit_tolerance=args.overfit_tol)
        if gate != config.gate:
            config = replace_config(config, gate=gate)
        ctx = RunContext(config)
        ran = run_stage(ctx, "gate", force=True)
        with open(ctx.path("gate", "summary.csv"), encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
        return 0

    if args.command == "run":
        run_pipeline(config, echo=lambda msg: print(msg, file=sys.stderr))
        print(os.path.abspath(config.out))
        return 0

    if args.command in _STAGE_COMMANDS:
        stage = _STAGE_COMMANDS[args.command]
        ctx = RunContext(config)
        ran = run_stage(ctx, stage)
        print(f"stage {stage}: {'completed' if ran else 'already up to date'}", file=sys.stderr)
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
