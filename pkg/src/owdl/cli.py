"""Command line: ``owdl run | validate | summarize``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from .sweep import read_metrics, run_sweep, summarize_rows, summary_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _load(path):
    data = cfgmod.load_file(path)
    return cfgmod.build(data)


def cmd_run(args) -> int:
    try:
        cfg = cfgmod.apply_profile(_load(args.config), args.profile)
    except cfgmod.ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    results = run_sweep(cfg, jobs=args.jobs, dump_transcripts=args.dump_transcripts, output_dir=args.output_dir)
    failed = sum(r.error is not None for r in results)
    out = args.output_dir or cfg.sweep.output_dir
    print(f"{len(results) - failed}/{len(results)} cells completed; results in {out}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_validate(args) -> int:
    try:
        data = cfgmod.load_file(args.config)
    except cfgmod.ConfigError as exc:
        for d in exc.diagnostics:
            print(d)
        return EXIT_CONFIG
    diags = cfgmod.validate(data)
    for d in diags:
        print(d)
    if not diags:
        print(f"{args.config}: ok")
    return EXIT_CONFIG if diags else EXIT_OK


def cmd_summarize(args) -> int:
    try:
        rows = read_metrics(args.input)
    except OSError as exc:
        print(f"{args.input}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    sys.stdout.write(summary_csv(summarize_rows(rows)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="owdl", description="Teacher-to-student place knowledge transfer experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep")
    run.add_argument("--config", required=True)
    run.add_argument("--jobs", type=int, default=1)
    run.add_argument("--profile", choices=sorted(cfgmod.PROFILES))
    run.add_argument("--dump-transcripts", action="store_true")
    run.add_argument("--output-dir", help="override sweep.output_dir")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)

    summ = sub.add_parser("summarize", help="summary table from a metrics CSV")
    summ.add_argument("--input", required=True)
    summ.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
