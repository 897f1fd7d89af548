"""Figure rendering for sweep results and convergence traces.

Reads the delimited output the harness writes and renders matplotlib figures
next to it.  Kept separate from the harness so data generation never depends
on a display stack.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

METHOD_STYLE = {
    "wm": dict(color="#0072BD", marker="o", label="multiplexing"),
    "wd": dict(color="#D95319", marker="s", label="division"),
    "ws": dict(color="#77AC30", marker="^", label="switching"),
    "ws-fast": dict(color="#4DBEEE", marker="v", label="switching (low-complexity)"),
    "fulldigital": dict(color="#7E2F8E", marker="D", label="fully-digital MIMO"),
    "hybrid": dict(color="#EDB120", marker="*", label="hybrid MIMO"),
}

AXIS_LABEL = {
    "p_max_dbm": "Maximum transmit power (dBm)",
    "n_pas": "Antennas per waveguide",
    "s_x_m": "User distribution range (m)",
    "w_m": "Waveguide distance (m)",
}


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_sweep(results_dir: str, out_path: str = None) -> str:
    """Mean min-rate curves with one-sigma bars from an aggregate CSV."""
    agg = _read_csv(os.path.join(results_dir, "results_agg.csv"))
    sweep_param = "sweep_value"
    label = ""
    cfg_path = os.path.join(results_dir, "config.json")
    if os.path.exists(cfg_path):
        import json
        with open(cfg_path) as fh:
            sidecar = json.load(fh)
        label = AXIS_LABEL.get(sidecar.get("sweep_param", ""), sidecar.get("sweep_param", ""))

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    methods = sorted({row["method"] for row in agg})
    for method in methods:
        rows = [r for r in agg if r["method"] == method]
        xs = [float(r["sweep_value"]) for r in rows]
        ys = [float(r["mean_min_rate"]) for r in rows]
        errs = [float(r["std_min_rate"]) for r in rows]
        style = METHOD_STYLE.get(method, dict(marker="x", label=method))
        ax.errorbar(xs, ys, yerr=errs, capsize=3, linewidth=1.8, **style)
    ax.set_xlabel(label or "sweep value")
    ax.set_ylabel("Minimum data rate (bps/Hz)")
    ax.grid(alpha=0.3, linestyle=":")
    ax.legend(fontsize=9)
    fig.tight_layout()

    out_path = out_path or os.path.join(results_dir, "figure.png")
    fig.savefig(out_path, dpi=160)
    plt.close(fig)
    return out_path


def plot_traces(trace_paths: dict, out_path: str) -> str:
    """Convergence figure: min rate (top) and equality residual (bottom,
    log scale) versus outer iteration, one curve per structure."""
    fig, (ax_rate, ax_res) = plt.subplots(2, 1, figsize=(6.0, 6.4), sharex=True)
    for method, path in trace_paths.items():
        rows = _read_csv(path)
        it = [int(r["outer_iteration"]) for r in rows]
        rate = [float(r["min_rate_bps_hz"]) for r in rows]
        res = [max(float(r["max_residual"]), 1e-16) for r in rows]
        style = METHOD_STYLE.get(method, dict(marker="x", label=method))
        ax_rate.plot(it, rate, linewidth=1.8, **style)
        ax_res.semilogy(it, res, linewidth=1.8, **style)
    ax_rate.set_ylabel("Minimum data rate (bps/Hz)")
    ax_rate.grid(alpha=0.3, linestyle=":")
    ax_rate.legend(fontsize=9)
    ax_res.set_xlabel("Outer iteration")
    ax_res.set_ylabel("Max equality residual")
    ax_res.grid(alpha=0.3, linestyle=":")
    fig.tight_layout()
    os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
    fig.savefig(out_path, dpi=160)
    plt.close(fig)
    return out_path
