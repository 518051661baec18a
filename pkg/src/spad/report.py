"""Figure rendering for evaluation reports and training curves.

Every figure lands beside the delimited output it illustrates, so a
report directory is self-contained: the JSONL holds the numbers, the
PNGs show them. The Agg backend keeps rendering headless and the SVG-free
PNG output byte-stable across re-runs on one platform.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from spad.errors import ConfigError
from spad.harness import EvalReport

_MODES = ("b", "c", "bc")


def render_rate_figure(reports: list[EvalReport], out_path: str | Path) -> Path:
    """Grouped bars of token and sentence attack rates per method."""
    if not reports:
        raise ConfigError("no reports to render")
    out_path = Path(out_path)
    methods = [r.method for r in reports]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    width = 0.8 / len(reports)
    for ax, level in zip(axes, ("token", "sentence")):
        for j, rep in enumerate(reports):
            vals = [getattr(rep, f"{level}_rate_{m}") for m in _MODES]
            xs = [i + j * width for i in range(len(_MODES))]
            ax.bar(xs, vals, width=width, label=rep.method)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(_MODES))])
        ax.set_xticklabels([m.upper() for m in _MODES])
        ax.set_ylabel(f"{level}-level attack rate (%)")
        ax.set_xlabel("reference mode")
    axes[0].legend(fontsize=8)
    fig.suptitle("Attack rates: " + ", ".join(methods))
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def render_quality_figure(reports: list[EvalReport], out_path: str | Path) -> Path:
    """Bars of mean perplexity and meaning similarity per method."""
    if not reports:
        raise ConfigError("no reports to render")
    out_path = Path(out_path)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.4))
    names = [r.method for r in reports]
    xs = range(len(reports))
    for ax, attr, label in (
        (axes[0], "mean_ppl", "mean perplexity"),
        (axes[1], "mean_sim", "mean similarity"),
    ):
        vals = [getattr(r, attr) for r in reports]
        shown = [v if v is not None else 0.0 for v in vals]
        ax.bar(xs, shown)
        ax.set_xticks(list(xs))
        ax.set_xticklabels(names, fontsize=8)
        ax.set_ylabel(label)
        for x, v in zip(xs, vals):
            if v is None:
                ax.text(x, 0, "n/a", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def render_training_curve(
    rows: list[dict], fields: list[str], out_path: str | Path, x_field: str = "epoch"
) -> Path:
    """Line plot of selected metric fields over training."""
    if not rows:
        raise ConfigError("no metric rows to render")
    missing = [f for f in fields if f not in rows[0]]
    if missing:
        raise ConfigError(f"metric rows lack fields: {', '.join(missing)}")
    out_path = Path(out_path)
    xs = [row[x_field] for row in rows]
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    for f in fields:
        ax.plot(xs, [row[f] for row in rows], marker=".", label=f)
    ax.set_xlabel(x_field)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
