"""Greedy and beam-search decoding with optional validity constraints.

A hypothesis's score is its summed token log-probability, so scores only
decrease as the prefix grows; once the best finished score beats every
active hypothesis the search can stop.  Ties are broken by lexicographic
token order, making results deterministic.  Hypotheses finalize when they
emit the stop token, or silently at the per-task length cap (cap hits are
reported so runaway decodes are visible, never fatal).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .models import DecodeState, Model, decode_start, decode_step

__all__ = ["CONSTRAINTS", "DecodeResult", "length_cap", "beam_search"]

CONSTRAINTS = ("none", "valid_tour")

NEG_INF = float("-inf")


class DecodeResult(NamedTuple):
    tokens: tuple[int, ...] | None  # emitted tokens, terminal stop excluded
    logprob: float
    cap_hit: bool

    @property
    def failed(self) -> bool:
        return self.tokens is None


def length_cap(task: str, n: int) -> int:
    """Token budget before a decode is cut off, comfortably above any
    legal output length for the task."""
    if task == "hull":
        return 2 * n + 3
    if task == "delaunay":
        return 3 * (3 * n) + 2
    if task == "tsp":
        return n + 2
    raise ValueError(f"unknown task {task!r}")


class _Hyp(NamedTuple):
    tokens: tuple[int, ...]
    logprob: float
    state: DecodeState | None  # state before consuming the last token
    last: int | None
    visited: frozenset
    done: bool


def _allowed(constraint: str, n: int, hyp: _Hyp) -> tuple[bool, np.ndarray]:
    """(may stop, boolean mask over tokens 1..n)."""
    if constraint == "none":
        return True, np.ones(n, dtype=bool)
    mask = np.ones(n, dtype=bool)
    for t in hyp.visited:
        mask[t - 1] = False
    return len(hyp.visited) == n, mask


def beam_search(model: Model, points, width: int = 1,
                constraint: str = "none", max_len: int | None = None) -> DecodeResult:
    """Best complete token sequence under the model.

    ``constraint="valid_tour"`` masks visited positions and forbids the
    stop token until every position appears, so any returned sequence is
    a permutation.  ``max_len`` defaults to the largest per-task cap.

    A hypothesis that emits the stop token competes for a beam slot one
    last time: if it survives it retires to the result pool, if it is
    pruned it is gone.  This makes width 1 follow the per-step argmax
    path exactly.
    """
    if width < 1:
        raise ValueError(f"beam width must be >= 1, got {width}")
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    ctx = decode_start(model, points)
    n = ctx.n
    cap = max_len if max_len is not None else length_cap("delaunay", n)

    active = [_Hyp((), 0.0, ctx.init, None, frozenset(), False)]
    pool: list[tuple[float, tuple[int, ...], bool]] = []
    for _ in range(cap):
        candidates: list[_Hyp] = []
        for hyp in active:
            lp, state = decode_step(ctx, hyp.state, hyp.last)
            may_stop, mask = _allowed(constraint, n, hyp)
            if may_stop:
                candidates.append(_Hyp(hyp.tokens, hyp.logprob + float(lp[0]),
                                       None, None, hyp.visited, True))
            for t in np.flatnonzero(mask) + 1:
                t = int(t)
                candidates.append(_Hyp(hyp.tokens + (t,),
                                       hyp.logprob + float(lp[t]),
                                       state, t, hyp.visited | {t}, False))
        if not candidates:
            break
        # a finished sequence is a strict prefix of its extensions, so the
        # lexicographic key already ranks it ahead on equal scores
        candidates.sort(key=lambda h: (-h.logprob, h.tokens))
        active = []
        for hyp in candidates[:width]:
            if hyp.done:
                pool.append((hyp.logprob, hyp.tokens, False))
            else:
                active.append(hyp)
        if not active:
            break
        if pool and max(p[0] for p in pool) >= active[0].logprob:
            # scores only decrease, so nothing active can catch up
            break
    else:
        for hyp in active:  # ran out of length budget
            pool.append((hyp.logprob, hyp.tokens, True))
    if not pool:
        return DecodeResult(None, NEG_INF, False)
    best = min(pool, key=lambda p: (-p[0], p[1]))
    return DecodeResult(best[1], best[0], best[2])
