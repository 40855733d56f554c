"""Command line interface: ``psdlab {simulate,sweep,compare-oracle,export}``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .harness import EXPORT_KINDS, OUTPUT_ENV, ExperimentConfig, export_plot_data, run, sweep

EXIT_OK, EXIT_PARTIAL, EXIT_FAILURE = 0, 1, 2


def _load(args, kind=None):
    cfg = ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        cfg = cfg.with_value("experiment.seed", args.seed)
    if kind is not None:
        cfg = cfg.with_value("experiment.kind", kind)
    return cfg


def _status_code(status):
    return {"complete": EXIT_OK, "partial": EXIT_PARTIAL}.get(status, EXIT_FAILURE)


def build_parser():
    parser = argparse.ArgumentParser(prog="psdlab", description="Shape-space curve dynamics laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment configuration (INI)")
        p.add_argument("--out", default=None, help=f"output directory (default: ${OUTPUT_ENV}/<hash>)")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")

    common(sub.add_parser("simulate", help="run one experiment"))
    common(sub.add_parser("sweep", help="run the [sweep] grid of an experiment"))
    common(sub.add_parser("compare-oracle", help="intrinsic run against the Newtonian oracle"))
    exp = sub.add_parser("export", help="write plot-ready tables from trajectory files")
    exp.add_argument("files", nargs="+", help="trajectory files")
    exp.add_argument("--kind", required=True, choices=EXPORT_KINDS)
    exp.add_argument("--out", default=None, help="directory for the tables (default: next to each file)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "export":
            for path in export_plot_data(args.files, args.kind, args.out):
                print(path)
            return EXIT_OK
        if args.threads < 1:
            raise ConfigError(["--threads must be at least 1"])
        if args.command == "sweep":
            result = sweep(_load(args), args.out, threads=args.threads)
            print(json.dumps({k: result[k] for k in ("parameter", "completed", "total")}, sort_keys=True))
            if result["completed"] == result["total"]:
                return EXIT_OK
            return EXIT_PARTIAL if result["completed"] else EXIT_FAILURE
        cfg = _load(args, "oracle-compare" if args.command == "compare-oracle" else None)
        manifest = run(cfg, args.out)
        print(json.dumps(manifest.to_json(), sort_keys=True, indent=2))
        return _status_code(manifest.status)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
