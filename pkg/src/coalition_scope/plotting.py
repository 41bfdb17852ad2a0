"""Report figures. Agg only, and PNG metadata stripped so reruns are byte-identical."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from coalition_scope.evaluation import GROUPS, METHODS, CaseResult, EvalReport  # noqa: E402

_PNG_META = {"Software": None}
_LABELS = {"rscore": "rationalizability", "value": "value only"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_mrr(report: EvalReport, path) -> Path:
    """Grouped bars of MRR@1 and MRR@5 per method and outcome group."""
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2), sharey=True)
    width = 0.35
    for ax, k in zip(axes, (1, 5)):
        for n, method in enumerate(METHODS):
            vals = [report.metric(method, f"mrr_at_{k}", g) for g in GROUPS]
            xs = [g + (n - 0.5) * width for g in range(len(GROUPS))]
            ax.bar(xs, [v if v is not None else 0.0 for v in vals], width, label=_LABELS[method])
        ax.set_xticks(range(len(GROUPS)), GROUPS)
        ax.set_title(f"MRR@{k}")
        ax.set_ylim(0, 1)
    axes[0].legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_rank_histogram(results: Sequence[CaseResult], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if results:
        top = max(r.rscore.universe for r in results)
        bins = [b - 0.5 for b in range(top + 1)]
        for method in METHODS:
            ranks = [getattr(r, method).rank for r in results if r.rscore.honored]
            if ranks:
                ax.hist(ranks, bins=bins, alpha=0.6, label=_LABELS[method])
    ax.set_xlabel("rank of honored agreement (0 = top)")
    ax.set_ylabel("cases")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_detection(detection: dict, path) -> Path:
    arms = sorted(detection)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    width = 0.25
    for n, metric in enumerate(("precision", "recall", "f1")):
        ax.bar([a + (n - 1) * width for a in range(len(arms))], [detection[a][metric] for a in arms],
               width, label=metric)
    ax.set_xticks(range(len(arms)), [a.replace("_", " ") for a in arms])
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, Path(path))
