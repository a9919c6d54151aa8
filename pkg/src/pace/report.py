"""Render experiment figures from exported CSVs.

The report path sits beside the delimited output: coverage progression per
archetype, convergence of the belief-truth gap with the explore:exploit mix,
and terminal-coverage summary bars.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ARCH_ORDER = ("fast", "moderate", "struggling", "quick_forgetter")
ARCH_COLORS = {
    "fast": "#1f77b4",
    "moderate": "#2ca02c",
    "struggling": "#d62728",
    "quick_forgetter": "#9467bd",
}

plt.rcParams.update({
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
})


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _f(row: dict, key: str) -> float | None:
    raw = row.get(key, "")
    return float(raw) if raw not in ("", None) else None


def coverage_progression(series: list[dict], out: Path) -> Path:
    by_arch: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in series:
        cov = _f(row, "coverage_truth")
        if cov is not None:
            by_arch[row["archetype"]][int(row["session"])].append(cov)
    fig, ax = plt.subplots()
    for arch in ARCH_ORDER:
        if arch not in by_arch and len(by_arch) <= len(ARCH_ORDER):
            continue
        data = by_arch.get(arch)
        if not data:
            continue
        sessions = sorted(data)
        means = [float(np.mean(data[s])) for s in sessions]
        ax.plot(sessions, means, label=arch,
                color=ARCH_COLORS.get(arch), linewidth=1.8)
    for arch in sorted(set(by_arch) - set(ARCH_ORDER)):
        data = by_arch[arch]
        sessions = sorted(data)
        ax.plot(sessions, [float(np.mean(data[s])) for s in sessions],
                label=arch, linewidth=1.8)
    ax.set_xlabel("session")
    ax.set_ylabel("coverage of mastered skills (%)")
    ax.set_title("Coverage progression")
    ax.legend(frameon=False)
    path = out / "coverage_progression.png"
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def gap_convergence(series: list[dict], out: Path) -> Path:
    sessions, deltas, ratios, sigmas = [], [], [], []
    sigma_by_session: dict[int, list[float]] = defaultdict(list)
    for row in series:
        delta = _f(row, "delta")
        if delta is None:
            continue
        t = int(row["session"])
        sessions.append(t)
        deltas.append(delta)
        er = _f(row, "explore_ratio")
        ratios.append(er if er is not None else np.nan)
        sig = _f(row, "sigma_bar_sq")
        if sig is not None:
            sigma_by_session[t].append(sig)
    fig, ax = plt.subplots()
    ratios_arr = np.array(ratios, dtype=float)
    colors = np.where(np.isnan(ratios_arr), 0.5, ratios_arr)
    sc = ax.scatter(sessions, deltas, c=colors, cmap="RdYlGn", s=12,
                    alpha=0.6, vmin=0.0, vmax=1.0)
    fig.colorbar(sc, ax=ax, label="explore share of batch")
    ax.set_xlabel("session")
    ax.set_ylabel("belief-truth gap")
    ax.set_title("Estimate convergence and exploration mix")
    ax2 = ax.twinx()
    ts = sorted(sigma_by_session)
    ax2.plot(ts, [float(np.mean(sigma_by_session[t])) for t in ts],
             color="gray", linewidth=1.5)
    ax2.set_ylabel("mean belief variance", color="gray")
    ax2.grid(False)
    path = out / "gap_convergence.png"
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def coverage_summary(summary: list[dict], out: Path) -> Path:
    fig, ax = plt.subplots()
    metrics = ("c10_mean", "c30_mean", "c50_mean")
    archs = [row["archetype"] for row in summary]
    width = 0.26
    xs = np.arange(len(archs))
    for k, metric in enumerate(metrics):
        vals = [(_f(row, metric) or 0.0) for row in summary]
        ax.bar(xs + (k - 1) * width, vals, width,
               label=metric.replace("_mean", "").upper())
    ax.set_xticks(xs)
    ax.set_xticklabels(archs, rotation=15)
    ax.set_ylabel("coverage (%)")
    policy = summary[0]["policy"] if summary else ""
    ax.set_title(f"Coverage checkpoints ({policy})")
    ax.legend(frameon=False)
    path = out / "coverage_summary.png"
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report(results_dir: str | Path, out_dir: str | Path | None = None
                  ) -> list[Path]:
    """Render all figures for one exported run directory."""
    results = Path(results_dir)
    out = Path(out_dir) if out_dir else results
    out.mkdir(parents=True, exist_ok=True)
    series = _read_csv(results / "series.csv")
    summary = _read_csv(results / "summary.csv")
    return [
        coverage_progression(series, out),
        gap_convergence(series, out),
        coverage_summary(summary, out),
    ]
