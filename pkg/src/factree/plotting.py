"""Figures for the report. Uses the Agg backend and strips file metadata so
reruns write identical bytes."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LEVELS = ("root", "branch", "leaf", "all")
STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
}


def plot_position_recall(metrics: dict[str, Any], path: str | Path) -> Path:
    """Recall per position bin: one panel per (perspective, level), one line per model."""
    runs = metrics["runs"]
    perspectives = sorted({r["perspective"] for r in runs})
    models = list(dict.fromkeys(r["model"] for r in runs))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(perspectives), len(LEVELS), sharey=True, squeeze=False,
                                 figsize=(2.6 * len(LEVELS), 2.2 * len(perspectives)))
        for i, persp in enumerate(perspectives):
            for j, level in enumerate(LEVELS):
                ax = axes[i][j]
                for m in models:
                    run = next((r for r in runs if r["model"] == m and r["perspective"] == persp), None)
                    if run is None:
                        continue
                    ys = run["position_recall"][level]
                    xs = [k + 1 for k, y in enumerate(ys) if y is not None]
                    ax.plot(xs, [y for y in ys if y is not None], marker="o", ms=3, lw=1, label=m)
                ax.set_title(f"{persp} / {level}")
                ax.set_xticks(range(1, metrics.get("bins", 5) + 1))
                ax.set_ylim(0, 1)
                if i == len(perspectives) - 1:
                    ax.set_xlabel("position bin")
                if j == 0:
                    ax.set_ylabel("recall")
        axes[0][0].legend(loc="lower left")
        fig.tight_layout()
        fig.savefig(path, format="png", metadata={"Software": None})
        plt.close(fig)
    return path
