"""Report figures rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MARKERS = "os^vD<>P*X"

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no timestamp or version metadata so reruns give identical files
    fmt = path.suffix.lstrip(".").lower() or "png"
    meta = {"Software": None} if fmt == "png" else {"Creator": None, "Date": None}
    if fmt == "svg":
        meta = {"Date": None, "Creator": None}
    fig.savefig(path, format=fmt, metadata=meta, bbox_inches="tight", dpi=120)
    plt.close(fig)
    return path


def bench_figure(records: Sequence, path) -> Path:
    """Grouped bars of ms/doc per solver, one group per dataset, log-scaled."""
    with plt.rc_context(STYLE):
        datasets = list(dict.fromkeys(r.dataset for r in records))
        solvers = list(dict.fromkeys(r.solver for r in records))
        caches = list(dict.fromkeys(r.cache for r in records))
        series = [(s, c) for s in solvers for c in caches
                  if any(r.solver == s and r.cache == c for r in records)]
        fig, ax = plt.subplots()
        width = 0.8 / max(len(series), 1)
        x = np.arange(len(datasets))
        for k, (s, c) in enumerate(series):
            vals = [next((r.ms_per_doc for r in records
                          if r.solver == s and r.cache == c and r.dataset == d), np.nan)
                    for d in datasets]
            label = s if len(caches) == 1 else f"{s} ({c})"
            ax.bar(x + (k - (len(series) - 1) / 2) * width, vals, width, label=label)
        ax.set_xticks(x, datasets)
        ax.set_yscale("log")
        ax.set_ylabel("ms per document")
        ax.legend(ncol=2)
        return _save(fig, path)


def denseness_figure(rows: Sequence[Mapping], path) -> Path:
    """Per-document denseness against entity count, with the canonical reference curves."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        n = np.array([r["entities"] for r in rows], dtype=float)
        d = np.array([r["denseness"] for r in rows], dtype=float)
        ax.scatter(n, d, s=14, alpha=0.7, color="C0", label="documents")
        if len(n):
            grid = np.arange(4, int(n.max()) + 1)
            ax.plot(grid, np.ones_like(grid, dtype=float), "--", color="C2", label="forest")
            ax.plot(grid, 2 * (grid - 1) / grid, "--", color="C1", label="tree")
            ax.plot(grid, grid - 1, ":", color="C3", label="dense")
            ax.set_yscale("log")
        ax.set_xlabel("entities in document")
        ax.set_ylabel("denseness")
        ax.legend()
        return _save(fig, path)


def correlation_figure(scores: Mapping[str, Sequence[float]], path, title: str = "") -> Path:
    """Objective score against number of correct links, each series min-max scaled."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, (name, ys) in enumerate(scores.items()):
            ys = np.asarray(ys, dtype=float)
            span = ys.max() - ys.min()
            scaled = (ys - ys.min()) / span if span > 0 else np.zeros_like(ys)
            ax.plot(np.arange(len(ys)), scaled, marker=MARKERS[k % len(MARKERS)], label=name)
        ax.set_xlabel("correct assignments")
        ax.set_ylabel("scaled objective")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def robustness_figure(curves: Mapping[str, Mapping[float, float]], path) -> Path:
    """F1 over linkable mentions as the NIL fraction grows, one line per solver."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, (solver, points) in enumerate(curves.items()):
            xs = sorted(points)
            ax.plot(xs, [points[x] for x in xs], marker=MARKERS[k % len(MARKERS)], label=solver)
        ax.set_xlabel("NIL fraction")
        ax.set_ylabel("F1 on linkable mentions")
        ax.set_ylim(0, 1.02)
        ax.legend()
        return _save(fig, path)
