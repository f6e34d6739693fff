"""Command line: ``hamesc <task> --config <path> [--out DIR] [--seed N] [--jobs N]``.

Exit status is 0 when every requested check passes, 1 when a task fails and
2 when the configuration or command line is invalid.
"""

import argparse
import logging
import sys

from .config import TASK_CHOICES, U64_MAX, load_config
from .errors import ConfigError, UsageError
from .report import PLOT_KINDS, emit_plot_data, write_report
from .runner import run_tasks

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("hamesc")


def _u64(text):
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("jobs must be positive")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="hamesc", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASK_CHOICES)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=_u64, help="rng seed (overrides the config)")
    ap.add_argument("--jobs", type=_positive,
                    help="worker processes; falls back to HAMESC_JOBS, then 1")
    ap.add_argument("--figures", action="store_true", help="also render PNG figures")
    ap.add_argument("--plot-data", action="store_true",
                    help="write per-record CSV files for every available plot kind")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, rng_seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"hamesc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run_tasks(cfg, args.task, args.jobs)
    paths = write_report(report, cfg.out)
    if args.plot_data:
        for kind in PLOT_KINDS:
            try:
                paths += emit_plot_data(report, kind, cfg.out)
            except UsageError:
                log.info("no %s data in this run", kind)
    if args.figures:
        from .plotting import render_figures
        paths += render_figures(report, cfg.out)
    for name, sec in report.data["results"].items():
        status = "pass" if sec.get("passed") else "FAIL"
        extra = f"  ({sec['error']})" if "error" in sec else ""
        print(f"{name:16s} {status}{extra}")
    log.info("wrote %d files under %s", len(paths), cfg.out)
    return EXIT_OK if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
