"""Monte-Carlo experiment runner: scenario sweeps with paired user draws.

Every (sweep value, seed) pair reuses the same user placement across all
methods, so method comparisons are common-random-number paired.  Results land
in two CSV files (raw rows and per-cell aggregates) plus a JSON sidecar with
the fully resolved configuration.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from . import baselines
from .pdd import PddConfig, pdd_solve
from .scenario import DEFAULT_CONFIG, build_scenario, sample_users
from .ws_unicast import solve_unicast_ws

WORKERS_ENV = "PASIM_WORKERS"

PASS_METHODS = ("wm", "wd", "ws")
ALL_METHODS = ("wm", "wd", "ws", "ws-fast", "fulldigital", "hybrid")

RESULT_FIELDS = ("method", "sweep_param", "sweep_value", "seed",
                 "min_rate_bps_hz", "outer_iterations", "wall_time_s",
                 "final_residual", "status")


@dataclass
class ExperimentSpec:
    """One sweep: a parameter axis, the methods to run, and the realization
    plan.  ``mode`` selects unicast (one user per group) or multicast."""

    name: str
    mode: str                    # "unicast" | "multicast"
    sweep_param: str             # "p_max_dbm" | "n_pas" | "s_x_m" | "w_m"
    sweep_values: tuple
    methods: tuple
    realizations: int = 50
    base_seed: int = 1000
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("unicast", "multicast"):
            raise ValueError("mode must be unicast or multicast")
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ValueError(f"unknown methods: {sorted(unknown)}")
        if self.mode == "multicast" and "ws-fast" in self.methods:
            raise ValueError("the low-complexity switching method is unicast-only")


# paper-style figure sweeps; fig3 is handled by the trace path instead
FIGURE_SPECS = {
    "4a": dict(mode="unicast", sweep_param="p_max_dbm",
               sweep_values=(0.0, 5.0, 10.0, 15.0, 20.0),
               methods=("wm", "wd", "ws", "ws-fast", "fulldigital", "hybrid")),
    "4b": dict(mode="multicast", sweep_param="p_max_dbm",
               sweep_values=(0.0, 5.0, 10.0, 15.0, 20.0),
               methods=("wm", "wd", "ws", "fulldigital", "hybrid")),
    "5": dict(mode="multicast", sweep_param="n_pas",
              sweep_values=(4, 6, 8, 10, 12),
              methods=("wm", "wd", "ws")),
    "6": dict(mode="multicast", sweep_param="s_x_m",
              sweep_values=(2.0, 4.0, 6.0, 8.0, 10.0),
              methods=("wm", "wd", "ws", "fulldigital", "hybrid")),
    "7": dict(mode="multicast", sweep_param="w_m",
              sweep_values=(5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0),
              methods=("wm", "wd", "ws", "fulldigital", "hybrid")),
}


def figure_spec(figure: str, realizations: int = 50, base_seed: int = 1000,
                config: dict = None) -> ExperimentSpec:
    if figure not in FIGURE_SPECS:
        raise ValueError(f"unknown figure {figure!r}; choose from {sorted(FIGURE_SPECS)}")
    return ExperimentSpec(name=f"fig{figure}", config=dict(config or {}),
                          realizations=realizations, base_seed=base_seed,
                          **FIGURE_SPECS[figure])


def _scenario_for(spec_cfg: dict, mode: str, sweep_param: str, value):
    cfg = dict(DEFAULT_CONFIG)
    cfg.update(spec_cfg)
    overrides = {}
    if sweep_param == "p_max_dbm":
        overrides["p_max_dbm"] = float(value)
    elif sweep_param == "n_pas":
        overrides["n_pas"] = int(value)
    elif sweep_param == "s_x_m":
        overrides["s_x_m"] = float(value)
    elif sweep_param == "w_m":
        overrides["w_m"] = float(value)
    else:
        raise ValueError(f"unknown sweep parameter {sweep_param!r}")
    overrides["p_max_dbm"] = overrides.get("p_max_dbm", cfg["p_max_dbm_list"][-1])
    overrides["g_users"] = 1 if mode == "unicast" else cfg["g_users"]
    return build_scenario(cfg, **overrides)


def run_single(method: str, scenario, users, pdd_config: PddConfig = None):
    """Solve one realization; returns (min_rate, outer_iterations, residual)."""
    rf, geo = scenario.rf, scenario.geometry
    if method in PASS_METHODS:
        res = pdd_solve(scenario, method, users, pdd_config or PddConfig())
        residual = res.trace[-1][3] if res.trace else float("nan")
        return res.report.min_rate, res.outer_iterations, residual
    if method == "ws-fast":
        res = solve_unicast_ws(scenario, users)
        return res.report.min_rate, 0, 0.0
    if method == "fulldigital":
        ula = baselines.default_ula(geo, rf, geo.num_waveguides)
        _, rate = baselines.fulldigital_mmf(users, ula, rf.max_transmit_power_w, rf)
        return rate, 0, 0.0
    if method == "hybrid":
        ula = baselines.default_ula(geo, rf, geo.total_antennas)
        _, _, rate = baselines.hybrid_mmf(users, ula, rf.max_transmit_power_w,
                                          rf, geo.num_waveguides)
        return rate, 0, 0.0
    raise ValueError(f"unknown method {method!r}")


def _run_task(task):
    method, mode, cfg, sweep_param, value, seed = task
    scenario = _scenario_for(cfg, mode, sweep_param, value)
    users = sample_users(scenario.regions, scenario.users_per_group, seed)
    start = time.perf_counter()
    try:
        rate, outers, residual = run_single(method, scenario, users)
        status = "ok"
    except Exception:
        rate, outers, residual, status = float("nan"), 0, float("nan"), "failed"
    wall = time.perf_counter() - start
    return {"method": method, "sweep_param": sweep_param, "sweep_value": value,
            "seed": seed, "min_rate_bps_hz": rate, "outer_iterations": outers,
            "wall_time_s": round(wall, 3), "final_residual": residual,
            "status": status}


def worker_count(workers: int = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_experiment(spec: ExperimentSpec, out_dir: str = None,
                   workers: int = None):
    """Execute the sweep and return (rows, aggregate rows).

    Rows are sorted by (method, value, seed) so output is identical for any
    worker schedule; per-realization failures are flagged, never fatal.
    """
    tasks = [(method, spec.mode, spec.config, spec.sweep_param, value,
              spec.base_seed + i)
             for method in spec.methods
             for value in spec.sweep_values
             for i in range(spec.realizations)]

    n_workers = worker_count(workers)
    if n_workers > 1 and len(tasks) > 1:
        with Pool(n_workers) as pool:
            rows = pool.map(_run_task, tasks)
    else:
        rows = [_run_task(t) for t in tasks]
    rows.sort(key=lambda r: (r["method"], r["sweep_value"], r["seed"]))

    agg = aggregate(rows)
    if out_dir is not None:
        write_results(spec, rows, agg, out_dir)
    return rows, agg


def aggregate(rows):
    """Mean/std of the min rate per (method, sweep value), failures excluded."""
    cells = {}
    for row in rows:
        cells.setdefault((row["method"], row["sweep_value"]), []).append(row)
    out = []
    for (method, value), cell in sorted(cells.items()):
        ok = [r["min_rate_bps_hz"] for r in cell if r["status"] == "ok"]
        out.append({
            "method": method,
            "sweep_value": value,
            "n_ok": len(ok),
            "n_failed": len(cell) - len(ok),
            "mean_min_rate": float(np.mean(ok)) if ok else float("nan"),
            "std_min_rate": float(np.std(ok)) if ok else float("nan"),
            "mean_outer_iterations": float(np.mean(
                [r["outer_iterations"] for r in cell if r["status"] == "ok"])) if ok else float("nan"),
            "mean_wall_time_s": float(np.mean([r["wall_time_s"] for r in cell])),
        })
    return out


def write_results(spec: ExperimentSpec, rows, agg, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    agg_fields = ("method", "sweep_value", "n_ok", "n_failed", "mean_min_rate",
                  "std_min_rate", "mean_outer_iterations", "mean_wall_time_s")
    with open(os.path.join(out_dir, "results_agg.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=agg_fields)
        writer.writeheader()
        writer.writerows(agg)
    resolved = dict(DEFAULT_CONFIG)
    resolved.update(spec.config)
    sidecar = {
        "name": spec.name, "mode": spec.mode, "sweep_param": spec.sweep_param,
        "sweep_values": list(spec.sweep_values), "methods": list(spec.methods),
        "realizations": spec.realizations, "base_seed": spec.base_seed,
        "config": resolved,
    }
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)


TRACE_FIELDS = ("outer_iteration", "inner_iterations", "min_rate_bps_hz",
                "max_residual", "rho")


def emit_convergence_trace(structure: str, scenario, users, out_path: str,
                           pdd_config: PddConfig = None):
    """Solve once and write per-outer-iteration rows for convergence plots."""
    if structure not in PASS_METHODS:
        raise ValueError("traces exist for the penalty-dual structures only")
    res = pdd_solve(scenario, structure, users, pdd_config or PddConfig())
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for row in res.trace:
            writer.writerow(row)
    return res
