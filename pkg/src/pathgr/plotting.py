"""Report figures written next to the TSV outputs."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def figsize(scale: float = 1.0) -> tuple[float, float]:
    width = 5.0 * scale
    return width, width * (math.sqrt(5.0) - 1.0) / 2.0


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_sweep(metrics_by_k: Mapping[int, Mapping[str, float]], path, names: Sequence[str] | None = None):
    """Metric value against number of decoded category paths."""
    ks = sorted(metrics_by_k)
    if names is None:
        names = sorted(n for n in metrics_by_k[ks[0]] if "/" not in n and n.startswith("recall"))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        for name in names:
            ax.plot(ks, [100 * metrics_by_k[k].get(name, float("nan")) for k in ks],
                    marker="o", label=name)
        ax.set_xlabel("number of decoded category paths")
        ax.set_ylabel("score (%)")
        ax.set_xticks(ks)
        ax.grid(True, axis="y", alpha=0.3)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_recall_curve(ranks: Mapping[str, int | None], path, max_k: int = 100):
    n = len(ranks)
    ks = list(range(1, max_k + 1))
    hits = [sum(1 for r in ranks.values() if r is not None and r <= k) / n if n else 0.0
            for k in ks]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize())
        ax.step(ks, [100 * h for h in hits], where="post")
        ax.set_xscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel("Recall@k (%)")
        ax.set_ylim(0, 101)
        ax.grid(True, alpha=0.3)
        return _save(fig, path)


def plot_bench(timings: Mapping[str, float], path):
    labels = ["docid only", "path + docid"]
    vals = [1000 * timings["docid_only_s"], 1000 * timings["path_and_docid_s"]]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=figsize(0.8))
        ax.bar(labels, vals, color=["0.6", "0.3"])
        ax.set_ylabel("ms / query")
        for x, v in enumerate(vals):
            ax.annotate(f"{v:.2f}", (x, v), ha="center", va="bottom")
        return _save(fig, path)
