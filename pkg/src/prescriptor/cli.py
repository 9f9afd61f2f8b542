"""Command-line entry point: ``prescriptor <subcommand> --config cfg.json``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import json
import os
import sys
import time

from . import experiments as ex
from . import tables
from .cutplane import CuttingPlaneError
from .erm import ErmError
from .lp import LpError
from .metrics import MetricError
from .solve import MethodError, SolveError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SUBCOMMAND_DEFAULTS = {
    "gen-data": {},
    "convergence": {},
    "dimension-study": {"instance": "shipment", "methods": ["knn", "rf"],
                        "sample_sizes": [2048]},
    "prescriptiveness": {},
    "censoring-study": {"instance": "newsvendor", "methods": ["knn"], "sample_sizes": [2048],
                        "replications": 40, "problem": {"tau": 0.7},
                        "censoring": {"rate": 0.3}},
    "erm-study": {"instance": "shipment", "methods": ["erm", "rf"],
                  "erm": {"optimizer": "cutting-plane"}},
}

PLOT_VALUE = {"prescriptiveness": "P"}


def load_config(command, path=None, seed=None):
    d = dict(SUBCOMMAND_DEFAULTS[command])
    if path is not None:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ex.ConfigError("config must be a JSON object")
        d.update(user)
    if seed is not None:
        d["seed"] = seed
    return ex.ExperimentConfig.from_dict(d)


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="prescriptor",
                                     description="Data-driven prescriptions: synthetic studies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--emit-plot-script", action="store_true",
                       help="also write a matplotlib script for the CSV")
    return parser


def run(command, cfg, out, threads=1, emit_plot=False):
    """Run one subcommand and write its outputs; returns the written paths."""
    os.makedirs(out, exist_ok=True)
    written = []
    t0 = time.perf_counter()
    if command == "gen-data":
        files = []
        for name, header, data in ex.generate_datasets(cfg):
            path = os.path.join(out, name)
            tables.write_matrix(path, header, data)
            files.append(name)
            written.append(path)
        meta = os.path.join(out, "gen-data.json")
        tables.write_json(meta, {"config": cfg.to_dict(), "files": files,
                                 "wall_time": time.perf_counter() - t0})
        return written + [meta]
    report = ex.STUDIES[command](cfg, threads)
    csv_path = os.path.join(out, f"{command}.csv")
    tables.write_rows(csv_path, report.columns, report.rows)
    json_path = os.path.join(out, f"{command}.json")
    tables.write_json(json_path, {"config": cfg.to_dict(), "summary": report.summary,
                                  "extra": report.extra, "row_wall_times": report.wall_times,
                                  "wall_time": time.perf_counter() - t0, "threads": threads})
    written += [csv_path, json_path]
    if emit_plot:
        script = os.path.join(out, f"plot_{command}.py")
        with open(script, "w") as fh:
            fh.write(tables.plot_script(f"{command}.csv", PLOT_VALUE.get(command, "true_risk")))
        written.append(script)
    return written


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ex.ConfigError("--threads must be >= 1")
        cfg = load_config(args.command, args.config, args.seed)
    except (ex.ConfigError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        for path in run(args.command, cfg, args.out, args.threads, args.emit_plot_script):
            print(path)
    except (ex.ConfigError, MethodError, ErmError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolveError, LpError, CuttingPlaneError, MetricError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
