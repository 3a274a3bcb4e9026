"""Command-line entry point: ``simulate`` one scenario or ``sweep`` a grid.

Exit codes: 0 success, 2 configuration error, 3 experiment error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (ConfigError, ExperimentError, load_scenario,
                      run_experiment, write_outputs)


def _simulate(args) -> int:
    cfg = load_scenario(args.config)
    if args.runs is not None:
        cfg = replace(cfg, runs=args.runs)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    table, log = run_experiment(cfg)
    paths = write_outputs(table, log, args.out)
    for p in paths:
        print(p)
    return 0


def _sweep(args) -> int:
    grid = Path(args.grid)
    if not grid.exists():
        raise ConfigError(f"no such grid file: {grid}")
    entries = [line.strip() for line in grid.read_text().splitlines()
               if line.strip() and not line.strip().startswith("#")]
    if not entries:
        raise ConfigError(f"grid file lists no configs: {grid}")
    for entry in entries:
        cfg_path = Path(entry)
        if not cfg_path.is_absolute():
            cfg_path = grid.parent / cfg_path
        cfg = load_scenario(cfg_path)
        table, log = run_experiment(cfg)
        out_dir = Path(args.out) / cfg.scenario_id
        for p in write_outputs(table, log, out_dir):
            print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="v2vcc",
        description="Peer-to-peer EV charging coordination simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario config")
    sim.add_argument("--config", required=True, help="scenario config file")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--runs", type=int, default=None,
                     help="override the number of runs")
    sim.add_argument("--seed", type=int, default=None, help="override the seed")
    sim.set_defaults(func=_simulate)

    sweep = sub.add_parser("sweep", help="run every config listed in a grid file")
    sweep.add_argument("--grid", required=True,
                       help="file with one config path per line")
    sweep.add_argument("--out", required=True, help="output directory root")
    sweep.set_defaults(func=_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
