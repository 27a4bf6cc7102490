"""Command-line front end.

Verbs::

    run       --scenario PATH --out DIR [--format csv|json] [--stride N] [--quiet]
    validate  --scenario PATH [--quiet]
    allocate  --lengths L1,L2,... --total N [--scenario PATH] [--quiet]

Exit codes: 0 success, 1 runtime fault, 2 usage error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from routeswarm import io
from routeswarm.allocation import (
    BRUTE_FORCE_MAX_FLOWS,
    BRUTE_FORCE_MAX_TOTAL,
    brute_force_allocate,
    greedy_allocate,
    ideal_flow_cost,
)
from routeswarm.model import Params, validate_scenario
from routeswarm.sim import run, summarize

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_USAGE = 2
EXIT_INVALID = 3

log = logging.getLogger("routeswarm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on its own; raise instead so main() decides
    def error(self, message):
        raise UsageError(message)


def _stride(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("stride must be >= 1")
    return v


def _lengths(text: str) -> List[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    if not vals:
        raise argparse.ArgumentTypeError("need at least one length")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="routeswarm", description="Relay swarm simulator")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate a scenario and write trace + summary")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--stride", type=_stride, default=1, help="keep every N-th position snapshot")
    r.add_argument("--quiet", action="store_true")

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--scenario", required=True, type=Path)
    v.add_argument("--quiet", action="store_true")

    a = sub.add_parser("allocate", help="greedy relay allocation over flow lengths")
    a.add_argument("--lengths", required=True, type=_lengths)
    a.add_argument("--total", required=True, type=int)
    a.add_argument("--scenario", type=Path, help="take link parameters from this scenario")
    a.add_argument("--quiet", action="store_true")
    return ap


def _say(args, msg: str, stream=None):
    if not getattr(args, "quiet", False):
        print(msg, file=stream or sys.stdout)


def _load(args):
    sc = io.load_scenario(args.scenario)
    problems = validate_scenario(sc)
    return sc, problems


def cmd_validate(args) -> int:
    sc, problems = _load(args)
    if problems:
        for v in problems:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    _say(args, f"{args.scenario}: ok ({sc.m} mobile, {sc.s} static, {sc.f} flows)")
    return EXIT_OK


def cmd_run(args) -> int:
    sc, problems = _load(args)
    if problems:
        for v in problems:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {args.out}: {exc.strerror}") from exc
    trace = run(sc, record_positions=True)
    if args.stride > 1:
        trace = trace.thinned(args.stride)
    files = io.write_trace(trace, args.out, args.format)
    report = summarize(trace)
    files.append(io.write_summary(report, args.out / "summary.json"))
    for f in files:
        _say(args, f"wrote {f}")
    if trace.fault:
        print(f"fault at tick {trace.fault_tick}: {trace.fault}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_allocate(args) -> int:
    if args.total < 0:
        raise UsageError("--total must be non-negative")
    if any(L <= 0 for L in args.lengths):
        raise UsageError("--lengths must be positive")
    p = Params()
    if args.scenario is not None:
        sc, problems = _load(args)
        if problems:
            for v in problems:
                print(f"violation: {v}", file=sys.stderr)
            return EXIT_INVALID
        p = sc.params
    lengths = {k + 1: L for k, L in enumerate(args.lengths)}
    alloc = greedy_allocate(lengths, args.total, p)
    rows = ["flow,length,relays,cost"]
    for k in sorted(lengths):
        rows.append(f"{k},{io.fmt(lengths[k])},{alloc.counts[k]},{io.fmt(ideal_flow_cost(lengths[k], alloc.counts[k], p))}")
    rows.append(f"total,,{alloc.total},{io.fmt(alloc.cost)}")
    if args.total <= BRUTE_FORCE_MAX_TOTAL and len(lengths) <= BRUTE_FORCE_MAX_FLOWS:
        oracle = brute_force_allocate(lengths, args.total, p)
        agree = oracle.cost == alloc.cost
        rows.append(f"oracle,,,{io.fmt(oracle.cost)},{'agree' if agree else 'DISAGREE'}")
    print("\n".join(rows))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "allocate": cmd_allocate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING)
    try:
        return COMMANDS[args.verb](args)
    except (UsageError, io.ScenarioFormatError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # anything else is a fault of the run itself
        log.exception("runtime fault")
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
