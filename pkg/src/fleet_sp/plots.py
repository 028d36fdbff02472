"""Figure rendering for the CLI report path.

Every report command writes its delimited output first and then, unless
figures are disabled, renders a matplotlib PNG next to it: fitted density
curves over demand histograms, decomposition convergence, out-of-sample
daily profit and the family comparison sweep.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def plot_density_grid(grids, histograms, path):
    """Small multiples per location: demand histogram plus fitted pdf.

    ``grids`` maps location -> (x, pdf) arrays; ``histograms`` maps
    location -> raw samples (may be empty for parametric-only runs).
    """
    locs = list(grids)
    ncols = min(4, max(1, len(locs)))
    nrows = (len(locs) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.6 * nrows),
                             squeeze=False)
    for ax in axes.ravel()[len(locs):]:
        ax.set_axis_off()
    for ax, loc in zip(axes.ravel(), locs):
        xs, pdf = grids[loc]
        samples = histograms.get(loc)
        if samples is not None and len(samples):
            ax.hist(samples, bins=min(30, max(5, len(samples) // 10 + 5)),
                    density=True, color="0.8", edgecolor="0.6")
        ax.plot(xs, pdf, color="C0", lw=1.5)
        ax.set_title(f"location {loc}", fontsize=9)
        ax.tick_params(labelsize=7)
    fig.suptitle("Daily demand densities", fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_convergence(records, path):
    """Lower/upper bound trajectory of the decomposition loop."""
    its = [r.iteration for r in records]
    lbs = [r.lb for r in records]
    ubs = [r.ub for r in records]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot(its, ubs, "s-", color="C3", label="upper bound (master)")
    ax.plot(its, lbs, "o-", color="C0", label="lower bound (incumbent)")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_out_of_sample(dates, daily_profits, path, expected=None):
    fig, ax = plt.subplots(figsize=(6.4, 3.4))
    ax.plot(range(len(daily_profits)), daily_profits, color="C0", lw=1.0)
    if expected is not None:
        ax.axhline(expected, color="C3", ls="--", lw=1.0,
                   label=f"expected {expected:,.0f}")
        ax.legend(fontsize=8)
    ax.set_xlabel(f"test day (of {len(daily_profits)})")
    ax.set_ylabel("profit")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_compare(rows, path):
    """Mean objective vs scenario count, one line per density family.

    ``rows`` are (family, n_scenarios, objective-or-None) tuples;
    infeasible cells are skipped.
    """
    families = sorted({r[0] for r in rows})
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    for k, fam in enumerate(families):
        pts = sorted((r[1], r[2]) for r in rows if r[0] == fam and r[2] is not None)
        if not pts:
            continue
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-",
                color=f"C{k}", label=fam)
    ax.set_xlabel("scenarios per replication")
    ax.set_ylabel("mean objective")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_saa_report(report, path):
    objs = [r.objective for r in report.included]
    idx = [r.index for r in report.included]
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.bar(idx, objs, color="C0", alpha=0.8)
    if objs:
        ax.axhline(float(np.mean(objs)), color="C3", ls="--", lw=1.0,
                   label=f"mean {np.mean(objs):,.0f}")
        ax.legend(fontsize=8)
    ax.set_xlabel("replication")
    ax.set_ylabel("objective")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
