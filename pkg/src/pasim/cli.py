"""Command-line interface.

Subcommands:

* ``solve`` - one realization of one method, printed and saved as JSON.
* ``sweep`` - a Monte-Carlo figure sweep; writes results.csv,
  results_agg.csv, config.json, and renders the figure alongside.
* ``trace`` - convergence trace(s) for the penalty-dual structures; writes
  traces/<structure>.csv and the convergence figure.
* ``plot``  - re-render figures from an existing results directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness, plotting
from .pdd import PddConfig
from .scenario import build_scenario, load_config, sample_users


def _add_config_arg(parser):
    parser.add_argument("--config", default=None,
                        help="JSON config file; unspecified keys use defaults")


def _cmd_solve(args):
    cfg = load_config(args.config)
    mode = "unicast" if args.unicast else "multicast"
    scenario = harness._scenario_for(cfg, mode, "p_max_dbm", args.p_max_dbm)
    users = sample_users(scenario.regions, scenario.users_per_group, args.seed)
    rate, outers, residual = harness.run_single(args.structure, scenario, users)
    result = {"method": args.structure, "mode": mode, "seed": args.seed,
              "p_max_dbm": args.p_max_dbm, "min_rate_bps_hz": rate,
              "outer_iterations": outers, "final_residual": residual}
    print(json.dumps(result, indent=2))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "solve.json"), "w") as fh:
            json.dump(result, fh, indent=2)
    return 0


def _cmd_sweep(args):
    if args.figure == "3":
        # the convergence figure is a single-realization trace, not a sweep
        args.structure = None
        args.p_max_dbm = 20.0
        return _cmd_trace(args)
    cfg = load_config(args.config)
    realizations = args.realizations if args.realizations else int(cfg["seeds"])
    spec = harness.figure_spec(args.figure, realizations=realizations,
                               base_seed=args.seed, config=cfg)
    rows, agg = harness.run_experiment(spec, out_dir=args.out,
                                       workers=args.workers)
    print(f"wrote {len(rows)} rows to {args.out}/results.csv")
    fig_path = plotting.plot_sweep(args.out)
    print(f"rendered {fig_path}")
    return 0


def _cmd_trace(args):
    cfg = load_config(args.config)
    scenario = harness._scenario_for(cfg, "multicast", "p_max_dbm", args.p_max_dbm)
    users = sample_users(scenario.regions, scenario.users_per_group, args.seed)
    structures = [args.structure] if args.structure else list(harness.PASS_METHODS)
    trace_dir = os.path.join(args.out, "traces")
    paths = {}
    for structure in structures:
        path = os.path.join(trace_dir, f"{structure}.csv")
        res = harness.emit_convergence_trace(structure, scenario, users, path)
        paths[structure] = path
        print(f"{structure}: {res.outer_iterations} outer iterations, "
              f"min rate {res.report.min_rate:.3f} bps/Hz -> {path}")
    fig_path = plotting.plot_traces(paths, os.path.join(args.out, "convergence.png"))
    print(f"rendered {fig_path}")
    return 0


def _cmd_plot(args):
    fig_path = plotting.plot_sweep(args.results, out_path=args.out)
    print(f"rendered {fig_path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pasim",
        description="Pinching-antenna system max-min fairness toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one realization")
    p_solve.add_argument("--structure", required=True,
                         choices=list(harness.ALL_METHODS))
    _add_config_arg(p_solve)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--p-max-dbm", type=float, default=20.0)
    p_solve.add_argument("--unicast", action="store_true")
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run a figure sweep")
    p_sweep.add_argument("--figure", required=True,
                         choices=["3"] + sorted(harness.FIGURE_SPECS))
    _add_config_arg(p_sweep)
    p_sweep.add_argument("--realizations", type=int, default=None,
                         help="realization count (default: the config's seeds)")
    p_sweep.add_argument("--seed", type=int, default=1000)
    p_sweep.add_argument("--workers", type=int, default=None,
                         help=f"worker processes (default: ${harness.WORKERS_ENV} "
                              "or the CPU count)")
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_trace = sub.add_parser("trace", help="emit convergence traces")
    p_trace.add_argument("--structure", default=None,
                         choices=list(harness.PASS_METHODS))
    _add_config_arg(p_trace)
    p_trace.add_argument("--seed", type=int, default=0)
    p_trace.add_argument("--p-max-dbm", type=float, default=20.0)
    p_trace.add_argument("--out", required=True)
    p_trace.set_defaults(func=_cmd_trace)

    p_plot = sub.add_parser("plot", help="render figures from results")
    p_plot.add_argument("--results", required=True,
                        help="directory holding results_agg.csv")
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
