"""Deterministic SVG figures for examples and predictions.

Each figure shows the point set plus the task structure: hull polygon,
triangulation edges, or tour path.  Predictions overlay the truth in a
dashed style.  Output bytes are reproducible for fixed input: the SVG id
hash salt is pinned and the date metadata field is dropped.
"""

from __future__ import annotations

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .data import Example

__all__ = ["render_example"]

_HASH_SALT = "ptrgeo"
_POINT_STYLE = {"color": "#1f77b4", "markersize": 5.0, "zorder": 3}
_TRUTH_STYLE = {"color": "#2ca02c", "linewidth": 1.6}
_PRED_STYLE = {"color": "#d62728", "linewidth": 1.2, "linestyle": "--"}


def _draw_structure(ax, task: str, pts: np.ndarray, tokens, style: dict) -> None:
    """Draw whatever structure the tokens describe; indices outside 1..n
    (including frame tokens) are dropped so malformed predictions still
    render their salvageable part."""
    n = len(pts)
    seq = [t for t in map(int, tokens) if 1 <= t <= n]
    if task == "delaunay":
        edges = set()
        for k in range(0, len(seq) - 2, 3):
            a, b, c = seq[k:k + 3]
            edges.update({tuple(sorted((a, b))), tuple(sorted((b, c))),
                          tuple(sorted((a, c)))})
        for a, b in sorted(edges):
            ax.plot([pts[a - 1, 0], pts[b - 1, 0]],
                    [pts[a - 1, 1], pts[b - 1, 1]], **style)
        return
    if len(seq) > 1 and seq[0] == seq[-1]:
        seq = seq[:-1]
    if len(seq) < 2:
        return
    ring = seq + [seq[0]]
    ax.plot([pts[i - 1, 0] for i in ring], [pts[i - 1, 1] for i in ring], **style)


def render_example(example: Example, path, pred=None, title: str | None = None) -> None:
    """Render one example to an SVG file, optionally overlaying a
    predicted token sequence on the true structure."""
    pts = np.asarray(example.points, dtype=float)
    fig = Figure(figsize=(4.0, 4.0), dpi=100)
    FigureCanvasSVG(fig)
    ax = fig.add_subplot(111)
    ax.set_aspect("equal")
    ax.axis("off")
    ax.margins(0.08)
    _draw_structure(ax, example.task, pts, example.output, _TRUTH_STYLE)
    if pred is not None:
        _draw_structure(ax, example.task, pts, pred, _PRED_STYLE)
    ax.plot(pts[:, 0], pts[:, 1], "o", **_POINT_STYLE)
    if title:
        ax.set_title(title, fontsize=9)
    with matplotlib.rc_context({"svg.hashsalt": _HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
