"""Command-line entry point: ``irlteach run | summarize | gen-env``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import VARIANTS, ConfigError, ExperimentConfig
from .env import build_env
from .harness import SUMMARY_COLUMNS, emit_outputs, run_experiments, summarize_dir, summary_rows

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("irlteach")


def _print_table(rows, out=None):
    w = csv.writer(out or sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    w.writerows(rows)


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if args.quick:
        config = config.quick()
    overrides = {}
    if args.seeds is not None:
        overrides["n_seeds"] = args.seeds
    if args.variants:
        overrides["variants"] = [v.strip() for v in args.variants.split(",") if v.strip()]
    if args.workers is not None:
        overrides["n_workers"] = args.workers
    if args.master_seed is not None:
        overrides["master_seed"] = args.master_seed
    # replace() re-runs validation
    return replace(config, **overrides) if overrides else config


def cmd_run(args) -> int:
    config = _load_config(args)
    summary, records = run_experiments(config)
    paths = emit_outputs(summary, records, args.out, config)
    failed = sum(r.status != "ok" for r in records)
    _print_table(summary_rows(summary.thresholds, summary.eps))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    if failed:
        log.warning("%d of %d sessions failed; see sessions.jsonl", failed, len(records))
    return EXIT_OK


def cmd_summarize(args) -> int:
    src = Path(args.in_dir)
    if not (src / "losses.csv").is_file() or not (src / "config.json").is_file():
        raise ConfigError(f"{src} does not contain losses.csv and config.json")
    table, config = summarize_dir(src)
    rows = summary_rows(table, config.eps)
    _print_table(rows)
    if args.write:
        with (src / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            w.writerows(rows)
    return EXIT_OK


def cmd_gen_env(args) -> int:
    if args.roads_per_type < 1:
        raise ConfigError("--roads-per-type must be at least 1")
    env = build_env(args.seed, args.roads_per_type)
    env.dump(args.out)
    log.info("wrote %d roads to %s", env.n_roads, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="irlteach", description="Interactive teaching experiments on the car-driving benchmark.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (variant, seed) session and write the outputs")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields (defaults if omitted)")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--seeds", type=int, help="number of seeds")
    run.add_argument("--variants", help=f"comma-separated subset of {','.join(VARIANTS)}")
    run.add_argument("--quick", action="store_true", help="8 roads, 500 weight samples, 4 seeds, 60 iterations")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--master-seed", type=int)
    run.set_defaults(func=cmd_run)

    summ = sub.add_parser("summarize", help="recompute the threshold table from a run directory")
    summ.add_argument("--in", dest="in_dir", required=True)
    summ.add_argument("--write", action="store_true", help="overwrite summary.csv in place")
    summ.set_defaults(func=cmd_summarize)

    gen = sub.add_parser("gen-env", help="generate and save an environment")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--roads-per-type", type=int, default=5)
    gen.set_defaults(func=cmd_gen_env)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
