"""Report figures, rendered headless to PNG with reproducible bytes."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import FailureClass, compute_metrics, failure_breakdown  # noqa: E402

if TYPE_CHECKING:
    from .harness import RunGroup

_META = {"Software": None}


def _legend(ax, columns: int) -> None:
    # outside the axes so bars at 100% stay visible
    ax.legend(fontsize="small", loc="upper center", bbox_to_anchor=(0.5, -0.12), ncol=max(columns, 1), frameon=False)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=_META)
    plt.close(fig)
    return path


def metrics_figure(groups: list["RunGroup"], path: Path) -> Path:
    cols = ["CRate", "TRate", "Exec. Compl.", "Graph Valid.", "Both Succ."]
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.8 / max(len(groups), 1)
    for k, g in enumerate(groups):
        rates = compute_metrics(g.results).rates()
        xs = [i + k * width for i in range(len(cols))]
        ax.bar(xs, [float(rates[c]) for c in cols], width, label=g.name)
    ax.set_xticks([i + width * (len(groups) - 1) / 2 for i in range(len(cols))])
    ax.set_xticklabels(cols)
    ax.set_ylabel("%")
    ax.set_ylim(0, 100)
    _legend(ax, len(groups))
    return _save(fig, path)


def failure_figure(groups: list["RunGroup"], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    names = [g.name for g in groups]
    bottoms = [0] * len(groups)
    for fc in FailureClass:
        vals = [failure_breakdown(g.results)[fc] for g in groups]
        ax.bar(names, vals, bottom=bottoms, label=fc.value)
        bottoms = [b + v for b, v in zip(bottoms, vals)]
    ax.set_ylabel("failing cases")
    _legend(ax, len(FailureClass))
    return _save(fig, path)


def token_figure(groups: list["RunGroup"], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    names = [g.name for g in groups]
    n = [max(len(g.results), 1) for g in groups]
    ex = [sum(r.exec_tokens for r in g.results) / k for g, k in zip(groups, n)]
    sm = [sum(r.summarize_tokens or 0 for r in g.results) / k for g, k in zip(groups, n)]
    ax.bar(names, ex, label="execute")
    ax.bar(names, sm, bottom=ex, label="summarize")
    ax.set_ylabel("mean output tokens")
    _legend(ax, 2)
    return _save(fig, path)


def render_figures(groups: list["RunGroup"], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        metrics_figure(groups, out_dir / "metrics.png"),
        failure_figure(groups, out_dir / "failures.png"),
        token_figure(groups, out_dir / "tokens.png"),
    ]
