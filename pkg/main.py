# Main entry point for prochern. It reads a document, parses and resolves it
# with dsl.py, evaluates queries and runs check suites through evaluator.py,
# and prints the report. Settings come from the environment (or a .env file)
# and command-line flags override them.
#
#   prochern eval FILE [--seed N] [--depth N] [--horizon N] [--format text|json]
#   prochern check FILE [same flags]      # checks only
#   prochern fmt FILE                     # canonical re-render
#
# Exit codes: 0 success, 1 a check failed, 2 input error.

import argparse
import sys
from dataclasses import replace
from typing import List, Optional

from dotenv import load_dotenv

from dsl import parse, render
from errors import DSLError, ProchernError
from evaluator import EvalSettings, evaluate
from session_logger import SessionLogger, log_error, set_global_logger

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prochern", description="Exact pro-Euler characteristics and pro-classes.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("eval", "evaluate queries and run checks"), ("check", "run checks only")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("file")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--depth", type=int)
        cmd.add_argument("--horizon", type=int)
        cmd.add_argument("--format", choices=("text", "json"))
    fmt = sub.add_parser("fmt", help="print the canonical rendering of a document")
    fmt.add_argument("file")
    return parser


def read_document(path: str) -> str:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise ProchernError(f"cannot read '{path}': {e.strerror}") from None
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        raise ProchernError(f"'{path}' is not valid UTF-8") from None


def settings_for(args: argparse.Namespace) -> EvalSettings:
    settings = EvalSettings.from_env()
    overrides = {key: getattr(args, key) for key in ("seed", "depth", "horizon", "format")
                 if getattr(args, key, None) is not None}
    return replace(settings, **overrides)


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "fmt":
        try:
            doc = parse(read_document(args.file))
        except ProchernError as e:
            print(f"[prochern] {args.file}: {e}", file=sys.stderr)
            return EXIT_INPUT_ERROR
        sys.stdout.write(render(doc))
        return EXIT_OK

    settings = settings_for(args)
    try:
        logger = SessionLogger.create(
            logs_dir=settings.log_dir,
            session_metadata={"document": args.file, "seed": settings.seed, "command": args.command,
                              "depth": settings.depth, "horizon": settings.horizon},
            console_output=settings.console_log,
        )
    except RuntimeError as e:
        print(f"[session_logger] {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    set_global_logger(logger)

    summary = {}
    try:
        doc = parse(read_document(args.file))
        report = evaluate(doc, settings=settings, queries=args.command == "eval")
        summary = {"queries": len(report.queries), "checks": len(report.checks), "passed": report.passed}
    except DSLError as e:
        log_error("parse", e.message, f"{e.line}:{e.column}")
        print(f"[prochern] {args.file}: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except ProchernError as e:
        log_error("evaluate", str(e))
        print(f"[prochern] {args.file}: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    finally:
        logger.close(summary)
        set_global_logger(None)

    sys.stdout.write(report.render(settings.format))
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def main() -> None:
    load_dotenv()
    sys.exit(run())


if __name__ == "__main__":
    main()
