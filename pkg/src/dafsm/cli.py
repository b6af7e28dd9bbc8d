"""Command line entry point: ``dafsm check|viz|generate|bench``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import bench, dsl, viz
from .core import DafsmError
from .solver import INCONCLUSIVE, NON_STOP, NOT_WELL_FORMED, STOP, WELL_FORMED, SolverConfig, check_machine

EXIT = {WELL_FORMED: 0, NOT_WELL_FORMED: 1, INCONCLUSIVE: 2}
EXIT_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="dafsm", description="Well-formedness checker for data-aware finite state machines.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="decide well-formedness of a .daf file")
    c.add_argument("file")
    mode = c.add_mutually_exclusive_group()
    mode.add_argument("--stop", dest="mode", action="store_const", const=STOP, help="halt at the first violation")
    mode.add_argument(
        "--non-stop", dest="mode", action="store_const", const=NON_STOP, help="evaluate every check (default)"
    )
    c.set_defaults(mode=NON_STOP)
    c.add_argument("--solver", default=None, help="SMT-LIB 2 solver executable (default: $DAFSM_SOLVER or z3)")
    c.add_argument("--timeout", type=int, default=10_000, help="per-query timeout in milliseconds")
    c.add_argument("--json", action="store_true", help="print the verdict as JSON")

    v = sub.add_parser("viz", help="write a DOT rendering")
    v.add_argument("file")
    v.add_argument("-o", "--output", default="-")

    g = sub.add_parser("generate", help="write a random machine as .daf")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--states", "-s", type=int, default=10)
    g.add_argument("--transitions", "-t", type=int, default=None, help="default: number of states")
    g.add_argument("--participants", "-p", type=int, default=5)
    g.add_argument("--functions", "-f", type=int, default=10)
    g.add_argument("--variables", "-v", type=int, default=5)
    g.add_argument("-o", "--output", default="-")

    b = sub.add_parser("bench", help="run the randomized benchmark grid and write CSV")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--seed", type=int, default=None, help="default: $DAFSM_BENCH_SEED or 0")
    b.add_argument("--runs", type=int, default=bench.RUNS)
    b.add_argument("--solver", default=None)
    b.add_argument("--no-verdict", action="store_true", help="skip the solver pass")
    return ap


def _write(text: str, output: str):
    if output == "-":
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _config(args, mode=NON_STOP) -> SolverConfig:
    kwargs = {"mode": mode}
    if args.solver:
        kwargs["executable"] = args.solver
    if getattr(args, "timeout", None) is not None:
        kwargs["timeout_ms"] = args.timeout
    return SolverConfig(**kwargs)


def _run(args) -> int:
    if args.command == "check":
        machine = dsl.load(args.file)
        verdict = check_machine(machine, _config(args, args.mode))
        print(verdict.to_json() if args.json else verdict.render())
        return EXIT[verdict.overall]
    if args.command == "viz":
        _write(viz.to_dot(dsl.load(args.file)), args.output)
        return 0
    if args.command == "generate":
        params = bench.GenParams(
            args.seed, args.participants, args.functions, args.variables, args.states,
            args.transitions if args.transitions is not None else args.states,
        )  # fmt: skip
        _write(dsl.print_machine(bench.generate(params)), args.output)
        return 0
    if args.command == "bench":
        seed = args.seed if args.seed is not None else int(os.environ.get("DAFSM_BENCH_SEED", "0"))
        rows = bench.run_suite(args.output, seed, runs=args.runs, config=_config(args), verdicts=not args.no_verdict)
        print(f"wrote {len(rows)} rows to {args.output}")
        return 0
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except dsl.DafsmSyntaxError as exc:
        for line in exc.format():
            print(line, file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, DafsmError) as exc:
        print(f"dafsm: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
