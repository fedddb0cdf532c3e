"""Command-line interface for planning, sampling and reconstruction runs."""

from __future__ import annotations

import argparse
import sys

from .enumeration import enumerate_ising, enumerate_melt
from .pipeline import PRESETS, PlanError, RunConfig, plan_intervals, preset, run_pipeline
from .ringmelt import CuboidLattice

_STAGE_COMMANDS = {
    "sample": "sample",
    "reconstruct": "reconstruct",
    "reweight": "reweight",
    "analyze": "analyze",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qubodos",
        description="Interval-restrained QUBO sampling and density-of-states "
        "reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = ["plan", "sample", "reconstruct", "reweight", "analyze", "pipeline", "oracle"]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", help="run-configuration INI file")
        p.add_argument(
            "--preset",
            choices=sorted(PRESETS),
            help="named preset instead of a config file",
        )
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--workers", type=int, help="parallel interval workers")
        p.add_argument(
            "--dry-run", action="store_true", help="print the plan, execute nothing"
        )
    return parser


def _load_config(args) -> RunConfig:
    if args.config and args.preset:
        raise SystemExit("give either --config or --preset, not both")
    if args.config:
        config = RunConfig.from_ini(args.config)
    elif args.preset:
        config = preset(args.preset)
    else:
        raise SystemExit("one of --config or --preset is required")
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = args.out
    if args.workers is not None:
        config.workers = args.workers
    return config


def _print_plan(config: RunConfig) -> None:
    for interval_id, lo, hi in plan_intervals(config):
        print(f"{interval_id} {lo} {hi}")


def _run_oracle(config: RunConfig) -> None:
    if config.system == "ising":
        exact, _ = enumerate_ising(config.l)
    else:
        exact, _ = enumerate_melt(CuboidLattice(config.dims))
    sys.stdout.write(exact.to_text())


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "plan" or args.dry_run:
            _print_plan(config)
            return 0
        if args.command == "oracle":
            _run_oracle(config)
            return 0
        until = _STAGE_COMMANDS.get(args.command)
        summary = run_pipeline(config, until=until)
        for stage in summary["stages_run"]:
            print(f"ran {stage}")
        print(f"artifacts in {config.out}")
        return 0
    except (PlanError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
