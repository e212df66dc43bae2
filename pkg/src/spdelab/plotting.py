"""Static figures for report curves (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _error_column(columns: dict, name: str):
    for cand in (f"{name}_stderr", name.replace("_mean", "_stderr"), "stderr" if name == "mean" else None):
        if cand and cand != name and cand in columns:
            return columns[cand]
    return None


def plot_curve(curve, path) -> Path:
    """One figure per curve; standard errors become shaded bands."""
    names = curve.header
    x = curve.columns[names[0]]
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in names[1:]:
        if name.endswith("stderr"):
            continue
        y = curve.columns[name]
        ax.plot(x, y, marker="o" if len(x) < 30 else None, ms=3, label=name)
        err = _error_column(curve.columns, name)
        if err is not None:
            ax.fill_between(x, y - 2 * err, y + 2 * err, alpha=0.2)
    if curve.logx and np.all(x[np.isfinite(x)] > 0):
        ax.set_xscale("log")
    data = [curve.columns[n] for n in names[1:] if not n.endswith("stderr")]
    if curve.logy and data and any(np.any(d[np.isfinite(d)] > 0) for d in data):
        ax.set_yscale("log")
    ax.set_xlabel(curve.xlabel or names[0])
    ax.set_ylabel(curve.ylabel)
    ax.set_title(curve.name)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
