"""Evaluation metrics and aggregate reports.

Predicted and true label sequences use the dataset token convention:
1-based point indices, with 0 allowed as a frame token that is stripped
before comparison.  Classical solvers run through the same report path
as models so their numbers are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import Example
from .decoding import beam_search, length_cap
from .geometry import clip_to_convex, convex_hull, delaunay, is_simple, shoelace_area
from .models import Model
from .tsp import a1_greedy_edge, a2_two_opt, a3_christofides, distance_matrix, held_karp, tour_length

__all__ = [
    "hull_accuracy",
    "area_coverage",
    "triangulation_metrics",
    "tsp_metrics",
    "EvalReport",
    "evaluate_model",
    "evaluate_solver",
    "SOLVERS",
]


def _strip_frame(seq: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(t) for t in seq if int(t) != 0)


def _strip_closing(seq: tuple[int, ...]) -> tuple[int, ...]:
    if len(seq) > 1 and seq[0] == seq[-1]:
        return seq[:-1]
    return seq


def hull_accuracy(pred: Sequence[int], truth: Sequence[int]) -> bool:
    """True when both sequences name the same polygon: equal vertex
    cycles up to rotation.  Reflections do not count (both sides are
    canonically counter-clockwise); malformed predictions are False."""
    p = _strip_closing(_strip_frame(pred))
    t = _strip_closing(_strip_frame(truth))
    if not p or len(p) != len(t):
        return False
    doubled = t + t
    return any(doubled[k:k + len(t)] == p for k in range(len(t)))


def area_coverage(pred: Sequence[int], truth: Sequence[int], points) -> float | None:
    """Fraction of the true hull's area covered by the predicted polygon,
    or None when the prediction is not a simple polygon (bad indices,
    repeats, fewer than three vertices, or self-intersection)."""
    pts = [(float(x), float(y)) for x, y in points]
    p = _strip_closing(_strip_frame(pred))
    t = _strip_closing(_strip_frame(truth))
    n = len(pts)
    if len(p) < 3 or len(set(p)) != len(p) or any(not 1 <= i <= n for i in p):
        return None
    poly = [pts[i - 1] for i in p]
    if not is_simple(poly):
        return None
    hull = [pts[i - 1] for i in t]
    denom = shoelace_area(hull)
    inter = clip_to_convex(poly, hull)
    return min(inter / denom, 1.0)


def triangulation_metrics(pred: Sequence[int], truth: Sequence[int]) -> tuple[bool, float]:
    """(exact, coverage) for flattened triangle lists.

    Triples are normalized to ascending order and compared as sets, so
    both triangle order and within-triple vertex order are irrelevant.
    A trailing partial triple is dropped and rules out exactness.
    """
    p = _strip_frame(pred)
    t = _strip_frame(truth)
    partial = len(p) % 3 != 0

    def triples(seq):
        return {tuple(sorted(seq[i:i + 3])) for i in range(0, len(seq) - 2, 3)}

    ps, ts = triples(p), triples(t)
    coverage = len(ps & ts) / len(ts) if ts else 0.0
    return (not partial and ps == ts), coverage


def tsp_metrics(pred: Sequence[int], points) -> tuple[bool, float | None]:
    """(valid, closed tour length); invalid predictions get length None."""
    p = _strip_frame(pred)
    n = len(points)
    if sorted(p) != list(range(1, n + 1)):
        return False, None
    return True, tour_length(points, p)


# ---------------------------------------------------------------------------
# reports


_COLUMNS = {
    "hull": ("index", "n", "correct", "coverage", "cap_hit", "pred"),
    "delaunay": ("index", "n", "exact", "coverage", "cap_hit", "pred"),
    "tsp": ("index", "n", "valid", "length", "cap_hit", "pred"),
}

NOT_SIMPLE_FAIL_FRACTION = 0.01


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


@dataclass
class EvalReport:
    """Per-example records plus aggregates recomputed from them on demand."""

    task: str
    decoder: str
    constraint: str
    records: list[dict] = field(default_factory=list)

    @property
    def aggregates(self) -> dict:
        recs = self.records
        count = len(recs)
        agg: dict = {
            "task": self.task,
            "decoder": self.decoder,
            "constraint": self.constraint,
            "count": count,
            "cap_hits": sum(1 for r in recs if r.get("cap_hit")),
        }
        if count == 0:
            return agg
        if self.task == "hull":
            agg["accuracy_pct"] = 100.0 * float(np.mean([r["correct"] for r in recs]))
            simple = [r["coverage"] for r in recs if r["coverage"] is not None]
            not_simple = count - len(simple)
            agg["not_simple_pct"] = 100.0 * not_simple / count
            if not_simple > NOT_SIMPLE_FAIL_FRACTION * count:
                agg["area_coverage_pct"] = "FAIL"
            else:
                agg["area_coverage_pct"] = 100.0 * float(np.mean(simple)) if simple else 0.0
        elif self.task == "delaunay":
            agg["accuracy_pct"] = 100.0 * float(np.mean([r["exact"] for r in recs]))
            agg["triangle_coverage_pct"] = 100.0 * float(np.mean([r["coverage"] for r in recs]))
        elif self.task == "tsp":
            lengths = [r["length"] for r in recs if r["valid"]]
            agg["validity_pct"] = 100.0 * len(lengths) / count
            agg["invalid_count"] = count - len(lengths)
            agg["mean_tour_length"] = float(np.mean(lengths)) if lengths else "NA"
        return agg

    def format_text(self) -> str:
        return "\n".join(f"{k}={_fmt(v)}" for k, v in self.aggregates.items()) + "\n"

    def per_example_tsv(self) -> str:
        cols = _COLUMNS[self.task]
        lines = ["\t".join(cols)]
        for r in self.records:
            cells = []
            for c in cols:
                v = r[c]
                if c == "pred":
                    v = " ".join(str(t) for t in v)
                elif v is None:
                    v = "not_simple" if c == "coverage" else "NA"
                else:
                    v = _fmt(v)
                cells.append(v)
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _record(task: str, index: int, ex: Example, pred: Sequence[int],
            cap_hit: bool) -> dict:
    rec = {"index": index, "n": ex.n, "cap_hit": cap_hit, "pred": tuple(pred)}
    if task == "hull":
        rec["correct"] = hull_accuracy(pred, ex.output)
        rec["coverage"] = area_coverage(pred, ex.output, ex.points)
    elif task == "delaunay":
        rec["exact"], rec["coverage"] = triangulation_metrics(pred, ex.output)
    elif task == "tsp":
        rec["valid"], rec["length"] = tsp_metrics(pred, ex.points)
    else:
        raise ValueError(f"unknown task {task!r}")
    return rec


def _check_same_task(examples: list[Example]) -> str:
    tasks = {ex.task for ex in examples}
    if len(tasks) != 1:
        raise ValueError(f"evaluation set mixes tasks {sorted(tasks)}")
    return examples[0].task


def evaluate_model(model: Model, examples: Sequence[Example], width: int = 1,
                   constraint: str = "none") -> EvalReport:
    examples = list(examples)
    if not examples:
        raise ValueError("empty evaluation set")
    task = _check_same_task(examples)
    decoder = "greedy" if width == 1 else f"beam:{width}"
    report = EvalReport(task, decoder, constraint)
    for i, ex in enumerate(examples):
        res = beam_search(model, ex.points, width, constraint,
                          max_len=length_cap(task, ex.n))
        pred = res.tokens if res.tokens is not None else ()
        report.records.append(_record(task, i, ex, pred, res.cap_hit))
    return report


SOLVERS = {
    "truth": ("hull", "delaunay", "tsp"),
    "exact": ("hull", "delaunay"),
    "optimal": ("tsp",),
    "a1": ("tsp",),
    "a2": ("tsp",),
    "a3": ("tsp",),
}


def _solve(name: str, task: str, ex: Example) -> tuple[int, ...]:
    if name == "truth":
        return tuple(ex.output)
    if task == "hull":
        return tuple(convex_hull(ex.points))
    if task == "delaunay":
        return tuple(i for tri in delaunay(ex.points) for i in tri)
    if name == "optimal":
        return tuple(held_karp(distance_matrix(ex.points)).order)
    if name == "a1":
        return tuple(a1_greedy_edge(distance_matrix(ex.points)).order)
    if name == "a2":
        return tuple(a2_two_opt(distance_matrix(ex.points)).order)
    return tuple(a3_christofides(ex.points).order)


def evaluate_solver(name: str, examples: Sequence[Example]) -> EvalReport:
    """Run a classical solver over the examples through the same report
    machinery used for models."""
    examples = list(examples)
    if not examples:
        raise ValueError("empty evaluation set")
    task = _check_same_task(examples)
    if name not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choices: {sorted(SOLVERS)}")
    if task not in SOLVERS[name]:
        raise ValueError(f"solver {name!r} does not apply to task {task!r}")
    report = EvalReport(task, f"solver:{name}", "none")
    for i, ex in enumerate(examples):
        pred = _solve(name, task, ex)
        report.records.append(_record(task, i, ex, pred, False))
    return report
