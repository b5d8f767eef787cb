"""Command-line entry point.

Subcommands: train (single task), continual (N-phase stream per seed),
sweep (override grids), diagnose (spectra + Tr(H Sigma) series),
landscape (loss slices), verify-oracles (independent-oracle gate).

Exit codes: 0 success, 1 validation problem, 2 numerical abort,
3 acceptance/oracle-check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, apply_overrides, load_config, parse_config
from .optim import NumericalAbort
from .persist import output_lock, write_sweep_csv
from .runner import (
    aggregate_metrics,
    build_landscapes,
    persist_records,
    run_experiment,
    run_sweep,
)
from .verify import run_all

__all__ = ["main"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_CHECK_FAILED = 3


def _add_common(parser: argparse.ArgumentParser, needs_config: bool = True):
    parser.add_argument("--config", required=needs_config, help="TOML config path")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config value, e.g. optimizer.rho=0.1 (repeatable)",
    )
    parser.add_argument("--out", default=None, help="output directory (overrides run.output_dir)")
    parser.add_argument("--seed", type=int, default=None, help="single seed overriding run.seeds")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for sweeps")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fladopt",
        description="sharpness-decomposition optimizers, CL harness, curvature diagnostics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("train", "single-task training run per seed"),
        ("continual", "class-incremental stream per seed"),
        ("diagnose", "continual run with spectrum reports and Tr(HSigma) series"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("sweep", help="grid of overrides x seeds")
    _add_common(p)
    p.add_argument(
        "--grid",
        action="append",
        default=[],
        metavar="KEY=V1,V2,...",
        help="sweep axis, e.g. optimizer.rho=0,0.05,0.2 (repeatable)",
    )

    p = sub.add_parser("landscape", help="loss slices around the final parameters")
    _add_common(p)
    p.add_argument("--mode", choices=("eigen", "random"), default="eigen")
    p.add_argument("--points", type=int, default=41, help="odd grid size, includes 0")
    p.add_argument("--span", type=float, default=1.0, help="offset scale multiplier")

    p = sub.add_parser("verify-oracles", help="run every independent oracle check")

    return parser


def _load(args) -> tuple:
    raw = load_config(args.config).to_dict()  # validates the file first
    raw = apply_overrides(raw, args.overrides)
    cfg = parse_config(raw, source=args.config)
    seeds = [args.seed] if args.seed is not None else list(cfg.run.seeds)
    out_dir = Path(args.out) if args.out else Path(cfg.run.output_dir)
    return cfg, raw, seeds, out_dir


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _run_experiments(args, *, single_task: bool, diagnose: bool) -> int:
    cfg, _, seeds, out_dir = _load(args)
    records = []
    with output_lock(out_dir):
        for seed in seeds:
            record, _ = run_experiment(cfg, seed, single_task=single_task, diagnose=diagnose)
            records.append(record)
            print(
                f"seed={seed} Acc={_fmt(record.final_accuracy)} "
                f"AAA={_fmt(record.anytime_accuracy)} "
                f"sharp_steps={record.sharp_steps}/{record.total_steps}"
            )
        persist_records(records, out_dir)
    agg = aggregate_metrics(records)
    print(
        f"{args.command} optimizer={cfg.optimizer.kind} seeds={len(seeds)} "
        f"Acc={_fmt(agg['acc_mean'])}+/-{_fmt(agg['acc_std'])} "
        f"AAA={_fmt(agg['aaa_mean'])}+/-{_fmt(agg['aaa_std'])}"
    )
    return EXIT_OK


def _run_sweep(args) -> int:
    cfg, raw, seeds, out_dir = _load(args)
    if not args.grid:
        raise ConfigError("sweep requires at least one --grid axis")
    rows = run_sweep(raw, args.grid, seeds, jobs=max(1, args.jobs))
    with output_lock(out_dir):
        write_sweep_csv(rows, out_dir / "sweep.csv")
    for row in rows:
        print(
            f"cell[{row['cell']}] Acc={_fmt(row['acc_mean'])}+/-{_fmt(row['acc_std'])} "
            f"AAA={_fmt(row['aaa_mean'])}+/-{_fmt(row['aaa_std'])}"
        )
    return EXIT_OK


def _run_landscape(args) -> int:
    cfg, _, seeds, out_dir = _load(args)
    with output_lock(out_dir):
        slices = build_landscapes(
            cfg, seeds[0], out_dir, mode=args.mode, points=args.points, span=args.span
        )
    for slc in slices:
        shape = "x".join(str(s) for s in slc.losses.shape)
        print(f"landscape mode={args.mode} grid={shape} center_loss={_fmt(slc.center_loss)}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage; report as validation
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION

    try:
        if args.command == "verify-oracles":
            return EXIT_OK if run_all() else EXIT_CHECK_FAILED
        if args.command in ("train", "continual", "diagnose"):
            return _run_experiments(
                args,
                single_task=args.command == "train",
                diagnose=args.command == "diagnose",
            )
        if args.command == "sweep":
            return _run_sweep(args)
        if args.command == "landscape":
            return _run_landscape(args)
        raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover
    except NumericalAbort as exc:
        where = ", ".join(f"{k}={v}" for k, v in exc.context.items())
        print(f"numerical abort: {exc} ({where})", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
