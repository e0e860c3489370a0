"""Figures for evaluation reports.

Uses the object-oriented matplotlib API with the Agg canvas, so figures
can be rendered from worker threads and headless machines.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluation import EvalReport

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
}
COLORS = {"em": "#4c72b0", "f1": "#dd8452", "neutral": "#55a868"}


def _new_figure(width: float = 4.5, height: float | None = None) -> tuple[Figure, object]:
    golden = (5**0.5 - 1) / 2
    fig = Figure(figsize=(width, height or width * golden), dpi=150)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot()
    ax.spines[["top", "right"]].set_visible(False)
    return fig, ax


def plot_resolution_split(report: EvalReport, path: Path) -> Path:
    """EM and F1 (x100) for fully resolved vs. unresolved questions."""
    split = report.aggregates()["by_resolution"]
    groups = ["resolved", "unresolved"]
    fig, ax = _new_figure()
    xs = range(len(groups))
    width = 0.38
    em = [100 * split[g]["em"] for g in groups]
    f1 = [100 * split[g]["f1"] for g in groups]
    ax.bar([x - width / 2 for x in xs], em, width, label="EM", color=COLORS["em"])
    ax.bar([x + width / 2 for x in xs], f1, width, label="F1", color=COLORS["f1"])
    ax.set_xticks(list(xs), [f"{g}\n(n={split[g]['n']})" for g in groups])
    ax.set_ylim(0, 105)
    ax.set_ylabel("score x100")
    ax.set_title("Score by final resolution status")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    return path


def plot_rounds(report: EvalReport, path: Path) -> Path:
    counts = Counter(r.rounds for r in report.rows)
    max_rounds = max([report.config.get("max_rounds", 0), *counts])
    xs = list(range(max_rounds + 1))
    fig, ax = _new_figure()
    ax.bar(xs, [counts.get(x, 0) for x in xs], color=COLORS["neutral"])
    ax.set_xticks(xs)
    ax.set_xlabel("retrieval rounds")
    ax.set_ylabel("questions")
    ax.set_title(f"Rounds per question (mean {report.aggregates()['mean_rounds']:.2f})")
    fig.tight_layout()
    fig.savefig(path)
    return path


def plot_token_cost(report: EvalReport, path: Path) -> Path:
    """Stacked input / 4 x output token cost per question."""
    fig, ax = _new_figure(width=max(4.5, 0.35 * len(report.rows)))
    ids = [r.example_id for r in report.rows]
    inputs = [r.input_tokens for r in report.rows]
    outputs = [4 * r.output_tokens for r in report.rows]
    ax.bar(ids, inputs, label="input", color=COLORS["em"])
    ax.bar(ids, outputs, bottom=inputs, label="4 x output", color=COLORS["f1"])
    ax.set_ylabel("weighted tokens")
    ax.set_title("Token cost per question")
    ax.tick_params(axis="x", labelrotation=90, labelsize=6)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    return path


def render_eval_figures(report: EvalReport, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(STYLE):
        return [
            plot_resolution_split(report, directory / "resolution_split.png"),
            plot_rounds(report, directory / "rounds.png"),
            plot_token_cost(report, directory / "token_cost.png"),
        ]
