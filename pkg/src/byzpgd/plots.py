"""Figure rendering for experiment reports.

The run subcommand drops these PNGs in <out>/figures next to report.json
and the CSV traces, so a finished run is inspectable without re-loading
anything.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_trace(trace, seed, path):
    """Gradient norms over parallel iterations for one seed, with the
    escape-phase iterations marked."""
    its = [r["iteration"] for r in trace.records]
    hat = [r["grad_norm_hat"] for r in trace.records]
    true = [r["grad_norm_true"] for r in trace.records]
    esc = [r["iteration"] for r in trace.records if r["phase"] == "escape"]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(its, hat, lw=0.8, label="aggregated grad norm")
    if not all(np.isnan(true)):
        ax.plot(its, true, lw=0.8, alpha=0.7, label="true grad norm")
    if esc:
        ax.plot(esc, [0.0] * len(esc), "|", color="tab:red", markersize=4,
                label="escape phase")
    ax.set_yscale("symlog", linthresh=1e-8)
    ax.set_xlabel("parallel iteration")
    ax.set_ylabel("gradient norm")
    ax.set_title(f"seed {seed}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_final_grad_norms(report, path):
    """Histogram of final true gradient norms across seeds."""
    vals = [s["grad_norm_true_at_output"] for s in report["seeds"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(vals, bins=min(30, max(5, len(vals) // 2)), color="tab:blue",
            edgecolor="black", linewidth=0.5)
    ax.set_xlabel("final true gradient norm")
    ax.set_ylabel("seeds")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_run_figures(report, traces, out_dir, max_trace_figs=4):
    """Render the standard figure set; returns the written paths."""
    fig_dir = os.path.join(out_dir, "figures")
    os.makedirs(fig_dir, exist_ok=True)
    written = []
    for seed in sorted(traces)[:max_trace_figs]:
        if not traces[seed].records:
            continue
        path = os.path.join(fig_dir, f"trace_seed_{seed}.png")
        plot_trace(traces[seed], seed, path)
        written.append(path)
    if report["seeds"]:
        path = os.path.join(fig_dir, "final_grad_norms.png")
        plot_final_grad_norms(report, path)
        written.append(path)
    return written
