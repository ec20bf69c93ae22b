"""Command line entry point: ``trapwalk {theory,simulate,sweep,validate}``.

Exit codes: 0 success, 1 validation failure, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import config as config_mod
from . import experiments, validation
from .errors import ConfigError, TrapwalkError

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapwalk", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=("theory", "simulate", "sweep", "validate"))
    parser.add_argument("--config", type=Path, help="flat TOML run config (defaults apply to missing keys)")
    parser.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    parser.add_argument("--workers", type=int, help="worker processes (overrides workers)")
    parser.add_argument("--quick", action="store_true", help="validate: reduced horizons, reported as smoke")
    return parser


def _load(args) -> config_mod.RunConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.RunConfig()
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = cfg.replace(workers=args.workers)
    return cfg


def _print_table(rows, columns, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([experiments.fmt(row.get(c)) for c in columns])


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            results = validation.cmd_validate(quick=args.quick, workers=args.workers or 1, stream=stdout)
            failed = [r.id for r in results if not r.passed]
            print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
                  + (f"; failed: {failed}" if failed else ""), file=stdout)
            return EXIT_VALIDATION if failed else EXIT_OK
        cfg = _load(args)
        if args.command == "theory":
            rows = experiments.cmd_theory(cfg, args.out)
            _print_table(rows, experiments.theory_columns(cfg.d), stdout)
        elif args.command == "simulate":
            experiments.cmd_simulate(cfg, args.out, args.workers)
            print(f"wrote {args.out or cfg.out_dir} (config_hash={cfg.config_hash()})", file=stdout)
        else:
            rows = experiments.cmd_sweep(cfg, args.out, args.workers)
            _print_table(rows, experiments.sweep_columns(cfg.d), stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrapwalkError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
