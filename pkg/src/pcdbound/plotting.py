"""Matplotlib figures for benchmark records (written next to the CSV)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {
    "sphere": "#1b9e77",
    "aabb": "#d95f02",
    "obb": "#7570b3",
    "kdop26": "#e7298a",
    "convex": "#66a61e",
}
# fixed metadata keeps the PNG bytes stable between runs
_META = {"Software": None}


def _canonical(records):
    return [r for r in records if r.frame == -1 and r.status == "ok"]


def _bars(ax, labels, groups, values, errors=None):
    width = 0.8 / max(len(labels), 1)
    x = np.arange(len(groups))
    for k, lab in enumerate(labels):
        y = [values.get((lab, g), np.nan) for g in groups]
        e = None if errors is None else [errors.get((lab, g), 0.0) for g in groups]
        ax.bar(x + (k - (len(labels) - 1) / 2) * width, y, width, yerr=e,
               label=lab, color=COLORS.get(lab, None), capsize=2)
    ax.set_xticks(x)
    return x


def plot_cp(records, path):
    """Mean bound per BV type against the Monte Carlo reference, one panel per distance."""
    recs = _canonical(records)
    distances = sorted({r.distance for r in recs})
    bvs = list(dict.fromkeys(r.bv_type for r in recs))
    sigmas = sorted({r.sigma for r in recs})
    fig, axes = plt.subplots(1, len(distances), figsize=(4.2 * len(distances), 3.4),
                             squeeze=False, sharey=True)
    for ax, d in zip(axes[0], distances):
        vals, mc = {}, {}
        for bv in bvs:
            for s in sigmas:
                rs = [r for r in recs if r.bv_type == bv and r.distance == d and r.sigma == s]
                if rs:
                    vals[(bv, s)] = 100 * np.mean([r.cp for r in rs])
                    mc[s] = 100 * np.mean([r.mc for r in rs])
        x = _bars(ax, bvs, sigmas, vals)
        ax.plot(x, [mc.get(s, np.nan) for s in sigmas], "k_", ms=28, mew=2, label="MC")
        ax.set_xticklabels([f"{100 * s:g} cm" for s in sigmas])
        ax.set_title(f"gap {100 * d:g} cm")
        ax.set_xlabel("sigma")
        ax.set_yscale("symlog", linthresh=0.1)
    axes[0, 0].set_ylabel("collision probability (%)")
    axes[0, -1].legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_bve(records, path):
    recs = _canonical(records)
    bvs = list(dict.fromkeys(r.bv_type for r in recs))
    values = [np.mean([r.bve for r in recs if r.bv_type == bv]) for bv in bvs]
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.bar(bvs, values, color=[COLORS.get(b) for b in bvs])
    ax.set_ylabel("BVE")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def plot_time(records, path):
    """Query time against the bound, one point per canonical record."""
    recs = _canonical(records)
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    for bv in dict.fromkeys(r.bv_type for r in recs):
        rs = [r for r in recs if r.bv_type == bv]
        ax.scatter([r.query_ms for r in rs], [100 * r.cp for r in rs], s=10,
                   color=COLORS.get(bv), label=bv)
    ax.set_xscale("log")
    ax.set_xlabel("query time (ms)")
    ax.set_ylabel("CP (%)")
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def write_figures(records, csv_path):
    """Write the CP, BVE and time figures beside ``csv_path``; returns their paths."""
    base = Path(csv_path)
    if not _canonical(records):
        return []
    stem = base.with_suffix("")
    return [
        plot_cp(records, f"{stem}_cp.png"),
        plot_bve(records, f"{stem}_bve.png"),
        plot_time(records, f"{stem}_time.png"),
    ]
