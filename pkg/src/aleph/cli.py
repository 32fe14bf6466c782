"""Command-line interface: ``aleph run|trace|check FILE``.

Exit codes: 0 terminated, 1 program error, 2 step budget exhausted,
3 parse, well-formedness, flag or input-script problems.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from aleph.frontend import ParseError, parse_program
from aleph.machine import InputExhausted, InteractiveInput, ScriptedInput
from aleph.runner import (
    BudgetExhausted,
    ProgramError,
    Terminated,
    default_max_steps,
    format_outcome,
    outcome_to_json,
    run,
    trace,
)

EXIT_OK = 0
EXIT_PROGRAM_ERROR = 1
EXIT_BUDGET = 2
EXIT_INVALID = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _steps(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if n < 0:
        raise argparse.ArgumentTypeError("step budget must be non-negative")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aleph", description="Run programs on the generate-and-test machine.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p):
        p.add_argument("file")
        p.add_argument("--input", type=_int_list, help="comma-separated input integers")
        p.add_argument("--input-file", help="file of whitespace or comma separated integers")
        p.add_argument("--max-steps", type=_steps, help="step budget (default $ALEPH_MAX_STEPS or 1000000)")
        p.add_argument("--format", choices=("text", "structured"), default="text")

    run_flags(sub.add_parser("run", help="run a program and report its outcome"))
    p_trace = sub.add_parser("trace", help="print one record per machine step")
    run_flags(p_trace)
    p_trace.add_argument("--rules-only", action="store_true", help="print only rule names")
    sub.add_parser("check", help="parse and check a program").add_argument("file")
    return parser


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}")
    return parse_program(text)


def _inputs(args):
    if args.input is not None and args.input_file is not None:
        raise UsageError("give at most one of --input and --input-file")
    if args.input is not None:
        return ScriptedInput(args.input)
    if args.input_file is not None:
        try:
            with open(args.input_file, encoding="utf-8") as fh:
                return ScriptedInput(_int_list(fh.read()))
        except OSError as exc:
            raise UsageError(f"{args.input_file}: {exc.strerror}")
        except argparse.ArgumentTypeError as exc:
            raise UsageError(str(exc))
    if sys.stdin.isatty():
        def read_line():
            try:
                return input("input> ")
            except EOFError:
                return ""
        return InteractiveInput(read_line)
    return ScriptedInput()


def _exit_code(outcome) -> int:
    if isinstance(outcome, Terminated):
        return EXIT_OK
    if isinstance(outcome, BudgetExhausted):
        return EXIT_BUDGET
    return EXIT_PROGRAM_ERROR


def _report(outcome, fmt: str, out) -> None:
    if fmt == "structured":
        print(outcome_to_json(outcome), file=out)
    else:
        print(format_outcome(outcome), file=out)


def cmd_run(args, out=None) -> int:
    out = out or sys.stdout
    program = _load(args.file)
    budget = default_max_steps() if args.max_steps is None else args.max_steps
    outcome = run(program, _inputs(args), budget)
    _report(outcome, args.format, out)
    return _exit_code(outcome)


def cmd_trace(args, out=None) -> int:
    out = out or sys.stdout
    program = _load(args.file)
    budget = default_max_steps() if args.max_steps is None else args.max_steps
    outcome, entries = trace(program, _inputs(args), budget)
    for e in entries:
        if args.rules_only:
            print(e.rule, file=out)
        elif args.format == "structured":
            print(e.to_json(), file=out)
        else:
            print(e.to_text(), file=out)
    if args.rules_only:
        print(outcome.rule, file=out)
    else:
        _report(outcome, args.format, out)
    return _exit_code(outcome)


def cmd_check(args, out=None) -> int:
    out = out or sys.stdout
    _load(args.file)
    print(f"{args.file}: ok", file=out)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "trace": cmd_trace, "check": cmd_check}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors by exiting
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(f"{args.file}:{d}", file=sys.stderr)
        return EXIT_INVALID
    except UsageError as exc:
        print(f"aleph: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InputExhausted as exc:
        shown = [str(a) for a in exc.actions if not a.pure]
        if getattr(args, "format", "text") == "structured":
            print(json.dumps({"outcome": "InputExhausted", "actions": shown}), file=sys.stdout)
        print(f"aleph: {exc}; actions so far [{', '.join(shown)}]", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
