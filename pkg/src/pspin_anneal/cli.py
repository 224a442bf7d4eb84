"""``anneal`` command line: sweep, gap scan and single runs."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bath import BathParams
from .config import ConfigError, SweepConfig, build_config, parse_config
from .lindblad import LindbladGenerator, default_step, evolve
from .sweep import RUN_ERRORS, fmt, gap_scan_command, run_sweep

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

TRAJECTORY_HEADER = ("s", "epsilon", "ground_pop", "trace_err", "min_eig")
TRAJECTORY_SAMPLES = 1000


def _load(path: Optional[str]) -> SweepConfig:
    return build_config({}) if path is None else parse_config(path)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anneal", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="run the (eta x t_f) residual-energy sweep")
    sw.add_argument("--config", required=True, help="YAML configuration file")
    sw.add_argument("--out", help="output directory (overrides output.dir)")
    sw.add_argument("--jobs", type=_positive_int, help="worker processes (overrides jobs)")
    sw.add_argument("--no-lamb-shift", action="store_true", help="drop H_LS from the generator")
    sw.add_argument("--no-plot", action="store_true", help="skip sweep.svg")

    gp = sub.add_parser("gap", help="scan the spectral gap of H(s) and write gaps.csv")
    gp.add_argument("--config", required=True, help="YAML configuration file")
    gp.add_argument("--resolution", type=int, help="number of grid points on [0, 1]")
    gp.add_argument("--out", help="output directory (overrides output.dir)")

    rn = sub.add_parser("run", help="a single annealing run")
    rn.add_argument("--eta", type=float, required=True, help="coupling strength")
    rn.add_argument("--tf", type=float, required=True, help="annealing time in units of 1/E")
    rn.add_argument("--trajectory", help="write sampled diagnostics to this CSV")
    rn.add_argument("--config", help="YAML configuration for the model, bath and stepper")
    rn.add_argument("--no-lamb-shift", action="store_true", help="drop H_LS from the generator")
    return parser


def _cmd_sweep(args) -> int:
    config = _load(args.config)
    result = run_sweep(config, out_dir=Path(args.out) if args.out else None, jobs=args.jobs,
                       lamb_shift=False if args.no_lamb_shift else None, plot=not args.no_plot)
    failed = result.failures
    print(f"{len(result.rows)} rows -> {result.csv_path}")
    if result.plot_path is not None:
        print(f"plot -> {result.plot_path}")
    for row in failed:
        print(f"FAILED eta={fmt(row.eta)} tf={fmt(row.tf)}: {row.message}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def _cmd_gap(args) -> int:
    config = _load(args.config)
    if args.resolution is not None and args.resolution < 3:
        raise ConfigError("--resolution", "must be >= 3")
    scan, path = gap_scan_command(config, args.resolution, Path(args.out) if args.out else None)
    print(f"min_gap {fmt(scan.min_gap)}")
    print(f"s_min {fmt(scan.s_min)}")
    print(f"gaps -> {path}")
    return EXIT_OK


def _stride_for(config: SweepConfig, bath: BathParams, evolution) -> int:
    if evolution.t_f == 0:
        return 1
    gen = LindbladGenerator(config.model, config.schedule, bath, evolution)
    steps = math.ceil(evolution.t_f / default_step(gen))
    return max(1, steps // TRAJECTORY_SAMPLES)


def _cmd_run(args) -> int:
    config = _load(args.config)
    if not (math.isfinite(args.eta) and args.eta >= 0):
        raise ConfigError("--eta", "must be a non-negative number")
    if not (math.isfinite(args.tf) and args.tf >= 0):
        raise ConfigError("--tf", "must be a non-negative number")
    evolution = config.evolution_for(args.tf)
    if args.no_lamb_shift:
        evolution = dataclasses.replace(evolution, lamb_shift=False)
    bath = BathParams(args.eta, config.beta, config.omega_c)
    if args.trajectory and evolution.record_stride is None:
        evolution = dataclasses.replace(evolution, record_stride=_stride_for(config, bath, evolution))

    try:
        res = evolve(config.model, config.schedule, bath, evolution)
    except RUN_ERRORS as exc:
        print(f"FAILED: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"residual_energy {fmt(res.residual_energy)}")
    print(f"ground_population {fmt(res.ground_population)}")
    print(f"trace_error {fmt(res.max_trace_error)}")
    print(f"min_eigenvalue {fmt(res.min_eigenvalue)}")
    print(f"steps {res.steps}")
    if args.trajectory:
        path = Path(args.trajectory)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRAJECTORY_HEADER)
            if res.trajectory is not None:
                for values in res.trajectory.as_array():
                    writer.writerow([fmt(v) for v in values])
        print(f"trajectory -> {path}")
    return EXIT_OK


_COMMANDS = {"sweep": _cmd_sweep, "gap": _cmd_gap, "run": _cmd_run}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
