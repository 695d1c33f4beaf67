"""Command line front end.

Verbs:
  run         execute an experiment described by a YAML config
  reproduce   run one of the canned study configurations
  validate    run the package test suite (needs a source checkout)
"""

import argparse
import os
import subprocess
import sys

from .harness import (apply_overrides, config_from_mapping, grid_cells,
                      load_config, run_experiment)


# The studies below settled on 50 refinement passes: the error curve
# is flat well before that (see the figure1 traces).
STUDY_ITERATIONS = 50


def _table2_raw(output_dir):
    return {
        "experiment": {
            "name": "table2",
            "output_path": os.path.join(output_dir, "table2.csv"),
            "replications": 20,
            "seed_base": 202501,
        },
        "grid": {
            "n": [5000], "m": [500], "p": [500], "s": [20],
            "noise": ["cauchy", "normal"], "tau": [0.3],
            "iterations": [STUDY_ITERATIONS],
        },
        "estimators": ["dist_rel", "pooled_rel", "avg_dc", "pooled_lasso"],
        "tuning": {"C0_grid": [0.5, 1.0, 2.0]},
    }


def _figure1_raw(output_dir):
    return {
        "experiment": {
            "name": "figure1",
            "output_path": os.path.join(output_dir, "figure1.csv"),
            "replications": 20,
            "seed_base": 202502,
        },
        "grid": {
            "n": [5000], "m": [500], "p": [500], "s": [20],
            "noise": ["cauchy"], "tau": [0.3],
            "iterations": [STUDY_ITERATIONS],
        },
        "estimators": ["dist_rel"],
        "tuning": {"C0_grid": [0.5, 1.0, 2.0], "record_iterates": True},
    }


def _bandwidth_raw(output_dir):
    return {
        "experiment": {
            "name": "bandwidth-sensitivity",
            "output_path": os.path.join(output_dir,
                                        "bandwidth_sensitivity.csv"),
            "replications": 10,
            "seed_base": 202503,
        },
        "grid": {
            "n": [10000], "m": [500], "p": [500], "s": [20],
            "noise": ["cauchy"], "tau": [0.3],
            "iterations": [STUDY_ITERATIONS],
            "bandwidth_scale": [0.5, 1.0, 2.0, 5.0, 10.0],
        },
        "estimators": ["dist_rel"],
        "tuning": {"C0_grid": [0.5, 1.0, 2.0]},
    }


CANNED = {
    "table2": _table2_raw,
    "figure1": _figure1_raw,
    "bandwidth-sensitivity": _bandwidth_raw,
}


def _execute(cfg):
    cells = grid_cells(cfg)
    total = len(cells) * cfg.replications * len(cfg.estimators)
    print(f"{cfg.name}: {len(cells)} cells x {cfg.replications} reps x "
          f"{len(cfg.estimators)} estimators = {total} fits")
    path = run_experiment(cfg)
    print(f"wrote {path}")
    return 0


def _cmd_run(args):
    cfg = load_config(args.config, args.set or ())
    return _execute(cfg)


def _cmd_reproduce(args):
    raw = CANNED[args.study](args.output_dir)
    cfg = config_from_mapping(apply_overrides(raw, args.set or ()))
    return _execute(cfg)


def _cmd_validate(args):
    package_root = os.path.dirname(os.path.abspath(__file__))
    repo = os.path.dirname(os.path.dirname(package_root))
    tests = os.path.join(repo, "tests")
    if not os.path.isdir(tests):
        print("validate needs the source checkout (tests/ not found "
              f"next to {repo})", file=sys.stderr)
        return 2
    cmd = [sys.executable, "-m", "pytest", "-q", tests]
    if args.quick:
        cmd += ["-k", "not acceptance"]
    return subprocess.call(cmd)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="distrel",
        description="distributed penalized quantile regression")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config")
    run.add_argument("--config", required=True, help="YAML config path")
    run.add_argument("--set", action="append", metavar="KEY=VALUE",
                     help="override a config entry by dotted name, e.g. "
                          "--set experiment.replications=5")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("reproduce", help="run a canned study")
    rep.add_argument("study", choices=sorted(CANNED))
    rep.add_argument("--output-dir", default="results")
    rep.add_argument("--set", action="append", metavar="KEY=VALUE")
    rep.set_defaults(func=_cmd_reproduce)

    val = sub.add_parser("validate", help="run the test suite")
    val.add_argument("--quick", action="store_true",
                     help="skip the acceptance tests")
    val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
