"""Command line front end: assemble, run, diff traces, storage stats.

Every RunConfig field can be preset through the environment with a
HANOI_ prefix (HANOI_ENGINE, HANOI_WARP_SIZE, HANOI_NUM_WARPS,
HANOI_STEP_BUDGET, HANOI_ATOMIC_ORDER, HANOI_BRANCH_TIE,
HANOI_SIMT_PRIORITY, HANOI_TRACE_OUT, HANOI_DUMP_STATE); command line
flags win over the environment.

Exit codes: 0 success, 1 diff over threshold, 2 usage or assembly error,
3 deadlock, 4 step budget exceeded, 5 runtime fault.
"""

from __future__ import annotations

import argparse
import glob as globlib
import os
import sys

from .asm import AsmError, Program, assemble_file
from .sim import ENGINES, RunConfig, SimResult, WarpOutcome, run_program
from .trace_tools import (
    TraceError,
    aggregate_discrepancy,
    read_trace,
    storage_report,
    summarize,
    write_trace,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_DIFF = 1
EXIT_USAGE = 2
EXIT_DEADLOCK = 3
EXIT_BUDGET = 4
EXIT_FAULT = 5

_OUTCOME_CODES = {
    WarpOutcome.FINISHED: EXIT_OK,
    WarpOutcome.DEADLOCK: EXIT_DEADLOCK,
    WarpOutcome.BUDGET: EXIT_BUDGET,
    WarpOutcome.FAULT: EXIT_FAULT,
}


def _env(name: str, default, cast=str):
    raw = os.environ.get(f"HANOI_{name}")
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    try:
        return cast(raw)
    except ValueError:
        print(f"bad HANOI_{name} value {raw!r}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hanoisim",
        description="warp control flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_asm = sub.add_parser("asm", help="assemble a program to JSON")
    p_asm.add_argument("input", help="assembly source file")
    p_asm.add_argument("-o", "--output",
                       help="output path (default: stdout)")

    p_run = sub.add_parser("run", help="assemble if needed, then simulate")
    p_run.add_argument("input",
                       help="program file (.asm source or .json), or a "
                            "glob pattern with --glob")
    p_run.add_argument("--glob", action="store_true",
                       help="treat input as a glob pattern and run "
                            "every match")
    p_run.add_argument("--engine", choices=ENGINES,
                       default=_env("ENGINE", "hanoi"))
    p_run.add_argument("--warp-size", type=int,
                       default=_env("WARP_SIZE", None, int),
                       help="override the program's .warpsize")
    p_run.add_argument("--num-warps", type=int,
                       default=_env("NUM_WARPS", None, int),
                       help="override the program's .warps")
    p_run.add_argument("--step-budget", type=int,
                       default=_env("STEP_BUDGET", 1_000_000, int),
                       help="instructions per warp before giving up")
    p_run.add_argument("--atomic-order", choices=("asc", "desc"),
                       default=_env("ATOMIC_ORDER", "asc"),
                       help="lane arbitration order within an atomic")
    p_run.add_argument("--branch-tie", choices=("taken", "not_taken"),
                       default=_env("BRANCH_TIE", "taken"),
                       help="which path runs first on an equal split")
    p_run.add_argument("--simt-priority",
                       choices=("taken", "not_taken", "majority"),
                       default=_env("SIMT_PRIORITY", "taken"),
                       help="path priority of the simtstack engine")
    p_run.add_argument("--trace-out",
                       default=_env("TRACE_OUT", None),
                       help="write the issue trace to this file")
    p_run.add_argument("--dump-state", action="store_true",
                       default=_env("DUMP_STATE", False, bool),
                       help="print final per-warp CFU state")

    p_diff = sub.add_parser("diff", help="compare two trace files")
    p_diff.add_argument("reference")
    p_diff.add_argument("candidate")
    p_diff.add_argument("--threshold", type=float, default=0.0,
                        help="max acceptable overall discrepancy in "
                             "percent (default 0.0)")
    p_diff.add_argument("--denom", choices=("ref", "max"), default="ref",
                        help="denominator: reference length or the "
                             "longer trace")

    p_stats = sub.add_parser("stats",
                             help="per-warp control state storage cost")
    p_stats.add_argument("--warp-size", type=int, default=32)
    p_stats.add_argument("--bregs", type=int, default=8)
    p_stats.add_argument("--pc-bits", type=int, default=32)

    return parser


def _load_program(path: str) -> Program:
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            return Program.from_json(fh.read(), source_name=path)
    return assemble_file(path)


# ── subcommands ─────────────────────────────────────────────────────────

def _cmd_asm(args) -> int:
    try:
        program = assemble_file(args.input)
    except AsmError as exc:
        print(f"{args.input}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    for warning in program.warnings:
        print(f"{args.input}: warning: {warning}", file=sys.stderr)
    text = program.to_json()
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run_one(path: str, config: RunConfig) -> tuple[int, SimResult | None]:
    try:
        program = _load_program(path)
    except (AsmError, ValueError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE, None
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE, None
    for warning in program.warnings:
        print(f"{path}: warning: {warning}", file=sys.stderr)
    try:
        result = run_program(program, config)
    except ValueError as exc:        # bad warp size / warp count overrides
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_USAGE, None
    return _OUTCOME_CODES[result.outcome], result


def _print_summary(path: str, result: SimResult) -> None:
    stats = summarize(result.events)
    for warp in result.warps:
        per = stats.get(warp.warp_id, {"events": 0, "simd_pct": 0.0})
        line = (f"warp {warp.warp_id}: {warp.outcome.value}, "
                f"{warp.issued} instructions, "
                f"simd {per['simd_pct']:.1f}%")
        if warp.fault:
            line += f" [{warp.fault}]"
        print(line)
    print(f"{path}: {result.outcome.value}, "
          f"{len(result.events)} instructions issued")


def _cmd_run(args) -> int:
    try:
        config = RunConfig(
            engine=args.engine,
            warp_size=args.warp_size,
            num_warps=args.num_warps,
            step_budget=args.step_budget,
            atomic_order=args.atomic_order,
            branch_tie=args.branch_tie,
            simt_priority=args.simt_priority,
            trace_out=args.trace_out,
            dump_state=args.dump_state,
        )
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE

    if args.glob:
        if config.trace_out:
            print("--trace-out cannot be combined with --glob",
                  file=sys.stderr)
            return EXIT_USAGE
        paths = sorted(globlib.glob(args.input))
        if not paths:
            print(f"no files match {args.input!r}", file=sys.stderr)
            return EXIT_USAGE
        worst = EXIT_OK
        for path in paths:
            code, result = _run_one(path, config)
            if result is None:
                print(f"{path}: assembly error")
            else:
                print(f"{path}: {result.outcome.value} "
                      f"({len(result.events)} instructions)")
            worst = max(worst, code)
        return worst

    code, result = _run_one(args.input, config)
    if result is None:
        return code
    _print_summary(args.input, result)
    if config.trace_out:
        write_trace(result.events, config.trace_out)
    for warp in result.warps:
        if config.dump_state or warp.outcome is WarpOutcome.DEADLOCK:
            print(f"--- warp {warp.warp_id} state ({warp.outcome.value}) ---")
            print(warp.cfu.dump())
    return code


def _cmd_diff(args) -> int:
    try:
        reference = read_trace(args.reference)
        candidate = read_trace(args.candidate)
        per_warp, overall = aggregate_discrepancy(reference, candidate,
                                                  denom=args.denom)
    except (TraceError, ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    for warp, pct in per_warp.items():
        print(f"warp {warp}: {pct:.4f}%")
    print(f"overall: {overall:.4f}%")
    return EXIT_OK if overall <= args.threshold else EXIT_DIFF


def _cmd_stats(args) -> int:
    try:
        print(storage_report(args.warp_size, args.bregs, args.pc_bits))
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "asm":
        return _cmd_asm(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "diff":
        return _cmd_diff(args)
    return _cmd_stats(args)


if __name__ == "__main__":
    sys.exit(main())
