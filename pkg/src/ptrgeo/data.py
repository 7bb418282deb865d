"""Deterministic example generation and line-oriented serialization.

An example pairs a point set with its solver-produced index sequence.
Generation is keyed by (seed, example index, redraw counter) so any
example can be regenerated in isolation and shards can be produced in
parallel without changing the stream.

File format, one example per line:

    x1 y1 x2 y2 ... xn yn output i1 i2 ... ik

Floats carry 10 significant digits; indices are 1-based.  Hull lines
include the closing repeat of the first hull vertex; triangulation lines
are flattened canonical triples; tour lines are plain permutations.
Start/stop frame tokens never appear in files; models add them at
training time.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import geometry, tsp

__all__ = [
    "TASKS",
    "TSP_SOLVERS",
    "Example",
    "GenSpec",
    "ParseError",
    "canonicalize",
    "example_at",
    "generate",
    "serialize",
    "parse",
    "write_file",
    "read_file",
]

TASKS = ("hull", "delaunay", "tsp")
TSP_SOLVERS = ("optimal", "a1", "a2", "a3")


class ParseError(ValueError):
    """Malformed example line."""


@dataclass(frozen=True)
class Example:
    task: str
    points: tuple[tuple[float, float], ...]
    output: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class GenSpec:
    task: str
    count: int
    n_min: int
    n_max: int
    seed: int
    solver: str = "optimal"  # tsp label source; ignored for other tasks

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        floor = 2 if self.task == "tsp" else 3
        if not (floor <= self.n_min <= self.n_max):
            raise ValueError(
                f"need {floor} <= n_min <= n_max for {self.task}, "
                f"got [{self.n_min}, {self.n_max}]")
        if self.task == "tsp":
            if self.solver not in TSP_SOLVERS:
                raise ValueError(
                    f"unknown tsp solver {self.solver!r}; expected one of {TSP_SOLVERS}")
            if self.solver == "optimal" and self.n_max > tsp.HELD_KARP_MAX:
                raise ValueError(
                    f"optimal tsp labels need n <= {tsp.HELD_KARP_MAX}, "
                    f"got n_max = {self.n_max}; pick a heuristic solver")
            if self.solver == "a3" and self.n_min < 3:
                raise ValueError("a3 labels need n >= 3")


# ---------------------------------------------------------------------------
# canonical forms


def canonicalize(task: str, points, raw) -> tuple[int, ...]:
    """Reduce a raw solver solution to the canonical token sequence.

    hull: closed cycle rotated to the lowest vertex index, counter-
    clockwise.  delaunay: each triple ascending, triples ordered by
    incenter coordinates.  tsp: rotated to start at city 1 and oriented
    so the second index is below the last (tours and their reversals are
    the same solution).
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    n = len(pts)
    if task == "hull":
        cycle = [int(i) for i in raw]
        if len(cycle) >= 2 and cycle[0] == cycle[-1]:
            cycle = cycle[:-1]
        _check_indices(cycle, n, "hull cycle")
        if len(set(cycle)) != len(cycle):
            raise ValueError("hull cycle repeats a vertex")
        if len(cycle) < 3:
            raise ValueError("hull cycle needs at least 3 vertices")
        start = cycle.index(min(cycle))
        cycle = cycle[start:] + cycle[:start]
        ring = [pts[i - 1] for i in cycle]
        if geometry.shoelace_area(ring) < 0:
            cycle = [cycle[0]] + cycle[:0:-1]
        return tuple(cycle + cycle[:1])
    if task == "delaunay":
        triples = []
        for t in raw:
            t = tuple(sorted(int(i) for i in t))
            _check_indices(t, n, "triangle")
            if len(set(t)) != 3:
                raise ValueError(f"triangle {t} repeats a vertex")
            triples.append(t)
        if len(set(triples)) != len(triples):
            raise ValueError("duplicate triangles")
        keyed = sorted(
            (geometry.incenter(pts[a - 1], pts[b - 1], pts[c - 1]), (a, b, c))
            for a, b, c in triples)
        return tuple(i for _, t in keyed for i in t)
    if task == "tsp":
        order = [int(i) for i in raw]
        if sorted(order) != list(range(1, n + 1)):
            raise ValueError("tour must be a permutation of 1..n")
        start = order.index(1)
        order = order[start:] + order[:start]
        if n >= 3 and order[1] > order[-1]:
            order = [1] + order[:0:-1]
        return tuple(order)
    raise ValueError(f"unknown task {task!r}")


def _check_indices(indices: Sequence[int], n: int, what: str):
    for i in indices:
        if not 1 <= i <= n:
            raise ValueError(f"{what} index {i} out of range 1..{n}")


def _solve(task: str, solver: str, pts: np.ndarray) -> tuple[int, ...]:
    if task == "hull":
        return canonicalize("hull", pts, geometry.convex_hull(pts))
    if task == "delaunay":
        return canonicalize("delaunay", pts, geometry.delaunay(pts))
    d = tsp.distance_matrix(pts)
    if solver == "optimal":
        order = tsp.held_karp(d).order
    elif solver == "a1":
        order = tsp.a1_greedy_edge(d).order
    elif solver == "a2":
        order = tsp.a2_two_opt(d).order
    else:
        order = tsp.a3_christofides(pts).order
    return canonicalize("tsp", pts, order)


# ---------------------------------------------------------------------------
# generation


def _rng_for(seed: int, index: int, redraw: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index, redraw))
    return np.random.Generator(np.random.PCG64(ss))


def example_at(spec: GenSpec, index: int) -> Example:
    """The index-th example of the stream, independent of all others.

    Degenerate draws (duplicate or collinear points the solver rejects)
    advance a per-example redraw counter; uniform float coordinates make
    this a measure-zero path, but it keeps determinism airtight.
    """
    if not 0 <= index < spec.count:
        raise IndexError(f"index {index} outside 0..{spec.count - 1}")
    for redraw in itertools.count():
        rng = _rng_for(spec.seed, index, redraw)
        n = int(rng.integers(spec.n_min, spec.n_max + 1))
        pts = rng.random((n, 2))
        try:
            output = _solve(spec.task, spec.solver, pts)
        except geometry.DegenerateInputError:
            continue
        return Example(spec.task, tuple((float(x), float(y)) for x, y in pts), output)
    raise AssertionError("unreachable")


def generate(spec: GenSpec) -> Iterator[Example]:
    """All examples of the spec, in index order."""
    for index in range(spec.count):
        yield example_at(spec, index)


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return "%.10g" % x


def serialize(example: Example) -> str:
    coords = " ".join(_fmt(c) for p in example.points for c in p)
    indices = " ".join(str(i) for i in example.output)
    return f"{coords} output {indices}"


def parse(line: str, task: str, lineno: int | None = None) -> Example:
    """Inverse of serialize; validates the label against the task's shape."""
    where = f"line {lineno}: " if lineno is not None else ""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    fields = line.split()
    try:
        sep = fields.index("output")
    except ValueError:
        raise ParseError(where + "missing 'output' separator") from None
    raw_coords, raw_indices = fields[:sep], fields[sep + 1:]
    if len(raw_coords) % 2 != 0:
        raise ParseError(where + f"odd coordinate count {len(raw_coords)}")
    if not raw_coords:
        raise ParseError(where + "no points")
    try:
        coords = [float(c) for c in raw_coords]
        indices = [int(i) for i in raw_indices]
    except ValueError as exc:
        raise ParseError(where + str(exc)) from None
    points = tuple(zip(coords[0::2], coords[1::2]))
    n = len(points)
    try:
        _check_indices(indices, n, task)
        _validate_label(task, n, indices)
    except ValueError as exc:
        raise ParseError(where + str(exc)) from None
    return Example(task, points, tuple(indices))


def _validate_label(task: str, n: int, indices: list[int]):
    if task == "hull":
        if len(indices) < 4 or indices[0] != indices[-1]:
            raise ValueError("hull label must be a closed cycle")
        interior = indices[:-1]
        if len(set(interior)) != len(interior):
            raise ValueError("hull cycle repeats a vertex")
    elif task == "delaunay":
        if not indices or len(indices) % 3 != 0:
            raise ValueError("triangulation label length must be a positive multiple of 3")
        triples = [tuple(indices[k:k + 3]) for k in range(0, len(indices), 3)]
        for t in triples:
            if not (t[0] < t[1] < t[2]):
                raise ValueError(f"triangle {t} not in ascending order")
        if len(set(triples)) != len(triples):
            raise ValueError("duplicate triangles")
    else:
        if sorted(indices) != list(range(1, n + 1)) or indices[0] != 1:
            raise ValueError("tour label must be a permutation starting at 1")


def write_file(path, examples: Iterable[Example]) -> int:
    """Write examples one per line (UTF-8, LF); returns the line count."""
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(serialize(ex))
            fh.write("\n")
            count += 1
    return count


def read_file(path, task: str) -> list[Example]:
    with open(path, "r", encoding="utf-8") as fh:
        out = []
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse(line, task, lineno))
        return out
