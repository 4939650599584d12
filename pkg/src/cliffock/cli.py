"""Command line entry point: ``cliffock <experiment> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .experiments import RUNNERS, ExperimentResult, run

EXIT_PASS, EXIT_CONTRACT, EXIT_USAGE = 0, 1, 2


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_outputs(result: ExperimentResult, outdir: Path) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in result.tables.items():
        path = outdir / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        written.append(path)
    for name, text in result.plots.items():
        path = outdir / name
        path.write_text(text, encoding="utf-8", newline="\n")
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cliffock", description=__doc__)
    parser.add_argument("experiment", choices=[*RUNNERS, "all"])
    parser.add_argument("--config", required=True, help="flat 'section.key = value' file")
    parser.add_argument("--output", help="override output.dir")
    parser.add_argument("--quiet-warnings", action="store_true", help="suppress numerical warnings")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outdir = Path(args.output or cfg.output_dir)
    if not outdir.is_absolute() and args.output is None and cfg.source:
        outdir = Path(cfg.source).parent / outdir
    with warnings.catch_warnings():
        if args.quiet_warnings:
            warnings.simplefilter("ignore")
        try:
            results = run(args.experiment, cfg)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    ok = True
    for res in results:
        write_outputs(res, outdir)
        for c in res.contracts:
            print(c.line())
        ok = ok and res.passed
    return EXIT_PASS if ok else EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
