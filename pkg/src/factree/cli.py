"""Command-line entry point: ``factree run``, ``factree stage`` and ``factree report``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import load_manifest
from .errors import FactreeError
from .pipeline import STAGES, Runner
from .report import render_csv, render_markdown

log = logging.getLogger("factree")


def _runner(args: argparse.Namespace) -> Runner:
    manifest = load_manifest(args.config, output=args.output)
    if args.seed is not None:
        manifest = dataclasses.replace(manifest, seed=args.seed)
    return Runner(manifest, mock=args.mock, resume=getattr(args, "resume", True))


def cmd_run(args: argparse.Namespace) -> int:
    runner = _runner(args)
    status = runner.run(only=args.only)
    if runner.errors:
        print(f"{len(runner.errors)} stage error(s); see {runner.path('errors.jsonl')}", file=sys.stderr)
        for e in runner.errors:
            print(f"  {e}", file=sys.stderr)
    else:
        print(f"done: {runner.out}")
    return status


def cmd_stage(args: argparse.Namespace) -> int:
    args.only = args.name
    return cmd_run(args)


def cmd_report(args: argparse.Namespace) -> int:
    try:
        metrics = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FactreeError(f"cannot read {args.metrics}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FactreeError(f"{args.metrics} is not valid JSON: {exc}") from exc
    text = render_markdown(metrics) if args.format == "md" else render_csv(metrics)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="run manifest (YAML)")
    p.add_argument("--mock", action="store_true", help="serve every model and the judge from the offline mock")
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.add_argument("--output", default=None, help="override the manifest output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="factree", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the whole pipeline (or one stage with --only)")
    _run_options(run)
    run.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True,
                     help="reuse persisted artifacts (default on); --no-resume starts fresh")
    run.add_argument("--only", choices=STAGES, default=None)
    run.set_defaults(func=cmd_run)

    stage = sub.add_parser("stage", help="run a single stage against existing artifacts")
    stage.add_argument("name", choices=STAGES)
    _run_options(stage)
    stage.set_defaults(func=cmd_stage)

    report = sub.add_parser("report", help="render metrics.json as tables")
    report.add_argument("metrics")
    report.add_argument("--format", choices=("md", "csv"), default="md")
    report.add_argument("--out", default=None, help="write here instead of stdout")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FactreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
