"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 every seed aborted.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .data import TOY_GEOMETRIES, gen_toy_dataset, save_csv_dataset
from .harness import (ConfigError, RunConfig, SpectrumConfig, all_seeds_aborted, compare_report,
                      run_experiment, run_spectrum)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2

log = logging.getLogger("sampled_qn")


def _cmd_run(args) -> int:
    cfg = RunConfig.from_json(args.config)
    summary = run_experiment(cfg)
    for item in summary["aborts"]:
        log.warning("seed %s aborted: %s", item["seed"], item["reason"])
    log.info("wrote %d trace(s) and summary.json to %s", len(cfg.seeds), cfg.out_dir)
    return EXIT_ABORTED if all_seeds_aborted(summary) else EXIT_OK


def _cmd_compare(args) -> int:
    n = compare_report(args.dirs, args.out)
    log.info("wrote %d row(s) to %s", n, args.out)
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    cfg = SpectrumConfig.from_json(args.config)
    run_spectrum(cfg)
    log.info("wrote spectra for %d seed(s) to %s", len(cfg.seeds), cfg.out_dir)
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    data = gen_toy_dataset(args.seed, geometry=args.geometry)
    save_csv_dataset(data, args.out, header=args.header)
    log.info("wrote %d points to %s", data.n, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sampled-qn", description="Sampled quasi-Newton benchmark toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one method over a list of seeds")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="tabulate accuracy and loss at budget checkpoints")
    p.add_argument("dirs", nargs="+", help="run output directories")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("spectrum", help="eigenvalue spectra of SR1-type approximations")
    p.add_argument("--config", required=True, help="JSON spectrum configuration")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("gen-data", help="write the two-class toy dataset as CSV")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--geometry", choices=TOY_GEOMETRIES, default="parabola")
    p.add_argument("--header", action="store_true", help="write a header row")
    p.set_defaults(func=_cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
