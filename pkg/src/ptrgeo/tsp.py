"""Planar travelling-salesman solvers: exact dynamic programming plus the
three approximation algorithms used for data generation and comparison.

Cities are numbered 1..n externally; tours are permutations starting at
city 1.  Distances are Euclidean and symmetric.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "CapacityError",
    "Tour",
    "distance_matrix",
    "held_karp",
    "a1_greedy_edge",
    "a2_two_opt",
    "two_opt",
    "a3_christofides",
    "tour_length",
]

HELD_KARP_MAX = 20


class CapacityError(ValueError):
    """Instance too large for the exact solver."""


class Tour(NamedTuple):
    order: tuple[int, ...]  # 1-based permutation starting at city 1
    length: float


def distance_matrix(points: Sequence) -> np.ndarray:
    """Symmetric Euclidean distance matrix with zero diagonal."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=2))


def _check_matrix(d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.array_equal(d, d.T):
        raise ValueError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0.0):
        raise ValueError("distance matrix diagonal must be zero")
    if np.any(d < 0.0):
        raise ValueError("distances must be non-negative")
    return d


def held_karp(d) -> Tour:
    """Optimal closed tour by bitmask dynamic programming, O(2^n n^2).

    Capped at n = 20 (the table alone is 2^20 x 20 doubles).  Among
    equally short tours the lexicographically smallest permutation is
    returned, which also makes the orientation deterministic.
    """
    d = _check_matrix(d)
    n = d.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 cities, got {n}")
    if n > HELD_KARP_MAX:
        raise CapacityError(
            f"exact solver is capped at n = {HELD_KARP_MAX} (got {n}); "
            "use a1_greedy_edge / a2_two_opt / a3_christofides")

    # g[mask, j] = shortest path cost from city 0 through exactly the
    # cities in mask (mask includes bits 0 and j), ending at j
    full = (1 << n) - 1
    g = np.full((1 << n, n), np.inf)
    g[1, 0] = 0.0
    masks = np.arange(1 << n, dtype=np.uint32)
    pop = np.bitwise_count(masks)
    has_zero = (masks & 1).astype(bool)
    for size in range(2, n + 1):
        layer = masks[(pop == size) & has_zero]
        for j in range(1, n):
            bit = np.uint32(1 << j)
            sel = layer[(layer & bit) != 0]
            if len(sel) == 0:
                continue
            prev = (sel ^ bit).astype(np.int64)
            g[sel.astype(np.int64), j] = (g[prev] + d[:, j]).min(axis=1)

    closing = g[full, 1:] + d[1:, 0]
    best = float(closing.min())

    # forward reconstruction: smallest feasible next city at every step,
    # using reversed-path completion costs (distances are symmetric)
    order = [0]
    visited = 1
    cur = 0
    acc = 0.0
    for _ in range(n - 1):
        for m in range(1, n):
            mbit = 1 << m
            if visited & mbit:
                continue
            rest = (full & ~(visited | mbit)) | 1 | mbit
            if acc + d[cur, m] + g[rest, m] <= best + 1e-9:
                acc += d[cur, m]
                visited |= mbit
                cur = m
                order.append(m)
                break
        else:
            raise AssertionError("no feasible continuation; tolerance too tight")
    return Tour(tuple(i + 1 for i in order), best)


def a1_greedy_edge(d) -> Tour:
    """Greedy edge construction: take the shortest remaining edge whose
    endpoints both still have degree below two and which does not close a
    subtour early.  Ties go to the lexicographically smallest city pair.

    This is the weaker of the two fast baselines; with uniform points its
    mean tour length sits a few percent above optimal (2.18-ish at n=5,
    3.09-ish at n=10), noticeably worse than a 2-opt polish.
    """
    d = _check_matrix(d)
    n = d.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 cities, got {n}")
    if n == 2:
        return Tour((1, 2), 2.0 * float(d[0, 1]))
    edges = sorted((d[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    degree = [0] * n
    comp = list(range(n))  # union-find over path fragments

    def find(x: int) -> int:
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    adj: list[list[int]] = [[] for _ in range(n)]
    taken = 0
    for _, i, j in edges:
        if degree[i] == 2 or degree[j] == 2:
            continue
        same = find(i) == find(j)
        if same and taken != n - 1:
            continue  # would close a subtour before covering every city
        adj[i].append(j)
        adj[j].append(i)
        degree[i] += 1
        degree[j] += 1
        if not same:
            comp[find(i)] = find(j)
        taken += 1
        if taken == n:
            break
    order = [0, min(adj[0])]
    while len(order) < n:
        u = order[-1]
        nxt = adj[u][0] if adj[u][0] != order[-2] else adj[u][1]
        order.append(nxt)
    length = float(sum(d[order[k], order[(k + 1) % n]] for k in range(n)))
    return Tour(tuple(i + 1 for i in order), length)


def two_opt(d, order: Sequence[int]) -> Tour:
    """Improve a tour by 2-opt segment reversals until no move helps.

    First-improvement policy with a fixed scan order (i ascending, then j
    ascending); each improving reversal is applied immediately and the
    sweep continues, repeating until a full sweep finds nothing.
    """
    d = _check_matrix(d)
    n = d.shape[0]
    tour = [c - 1 for c in order]
    if sorted(tour) != list(range(n)) or tour[0] != 0:
        raise ValueError("order must be a 1-based permutation starting at city 1")
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                a, b = tour[i - 1], tour[i]
                c, e = tour[j], tour[(j + 1) % n]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -1e-12:
                    tour[i:j + 1] = tour[i:j + 1][::-1]
                    improved = True
    length = float(sum(d[tour[k], tour[(k + 1) % n]] for k in range(n)))
    return Tour(tuple(i + 1 for i in tour), length)


def a2_two_opt(d) -> Tour:
    """The greedy-edge tour polished by 2-opt local search.

    Never longer than the greedy-edge tour; at small n it is optimal on
    almost every instance.
    """
    return two_opt(d, a1_greedy_edge(d).order)


def _prim_mst(d: np.ndarray) -> list[tuple[int, int]]:
    """Minimum spanning tree edges, O(n^2); ties go to the lowest index."""
    n = d.shape[0]
    in_tree = [False] * n
    key = [math.inf] * n
    parent = [-1] * n
    key[0] = 0.0
    edges = []
    for _ in range(n):
        u = min((i for i in range(n) if not in_tree[i]), key=lambda i: (key[i], i))
        in_tree[u] = True
        if parent[u] >= 0:
            edges.append((parent[u], u))
        for v in range(n):
            if not in_tree[v] and d[u, v] < key[v]:
                key[v] = d[u, v]
                parent[v] = u
    return edges


def _exact_matching(d: np.ndarray, odd: list[int]) -> list[tuple[int, int]]:
    """Minimum-weight perfect matching on the odd set by subset DP."""
    k = len(odd)
    full = (1 << k) - 1
    cost = {0: 0.0}
    choice: dict[int, tuple[int, int]] = {}

    def solve(mask: int) -> float:
        if mask in cost:
            return cost[mask]
        i = (mask & -mask).bit_length() - 1  # lowest set bit pairs first
        best = math.inf
        best_pair = (-1, -1)
        for j in range(i + 1, k):
            jbit = 1 << j
            if mask & jbit:
                c = d[odd[i], odd[j]] + solve(mask & ~(1 << i) & ~jbit)
                if c < best:
                    best = c
                    best_pair = (i, j)
        cost[mask] = best
        choice[mask] = best_pair
        return best

    solve(full)
    pairs = []
    mask = full
    while mask:
        i, j = choice[mask]
        pairs.append((odd[i], odd[j]))
        mask &= ~(1 << i) & ~(1 << j)
    return pairs


def _greedy_matching(d: np.ndarray, odd: list[int]) -> list[tuple[int, int]]:
    """Shortest-edge-first matching; used when the odd set is too large
    for the subset DP.  No optimality guarantee."""
    candidates = sorted(
        ((d[u, v], u, v) for i, u in enumerate(odd) for v in odd[i + 1:]))
    unmatched = set(odd)
    pairs = []
    for _, u, v in candidates:
        if u in unmatched and v in unmatched:
            pairs.append((u, v))
            unmatched.discard(u)
            unmatched.discard(v)
    return pairs


EXACT_MATCHING_MAX_ODD = 16


def a3_christofides(points: Sequence) -> Tour:
    """1.5-approximation: MST, minimum perfect matching on odd-degree
    vertices, Eulerian circuit, then shortcutting.

    The matching is exact (subset DP) when at most 16 vertices have odd
    degree; larger odd sets fall back to greedy shortest-edge matching
    and lose the approximation guarantee.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        raise ValueError(f"need at least 3 cities, got {n}")
    d = distance_matrix(pts)
    mst = _prim_mst(d)
    degree = [0] * n
    for u, v in mst:
        degree[u] += 1
        degree[v] += 1
    odd = [i for i in range(n) if degree[i] % 2 == 1]
    assert len(odd) % 2 == 0, "odd-degree vertex count must be even"
    if len(odd) <= EXACT_MATCHING_MAX_ODD:
        matching = _exact_matching(d, odd)
    else:
        matching = _greedy_matching(d, odd)

    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in mst + matching:
        adj[u].append(v)
        adj[v].append(u)
    for nbrs in adj:
        nbrs.sort(reverse=True)  # pop() then takes the lowest index first

    # Hierholzer's algorithm on the MST + matching multigraph
    stack = [0]
    circuit = []
    while stack:
        u = stack[-1]
        if adj[u]:
            v = adj[u].pop()
            adj[v].remove(u)
            stack.append(v)
        else:
            circuit.append(stack.pop())
    circuit.reverse()

    seen = set()
    order = []
    for v in circuit:
        if v not in seen:
            seen.add(v)
            order.append(v)
    assert order[0] == 0 and len(order) == n
    length = float(sum(d[order[k], order[(k + 1) % n]] for k in range(n)))
    return Tour(tuple(i + 1 for i in order), length)


def tour_length(points: Sequence, order: Sequence[int]) -> float:
    """Length of the closed tour visiting points in the given 1-based order."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    tour = list(order)
    if sorted(tour) != list(range(1, n + 1)):
        raise ValueError("tour must be a permutation of 1..n")
    total = 0.0
    for k in range(n):
        a = pts[tour[k] - 1]
        b = pts[tour[(k + 1) % n] - 1]
        total += math.hypot(a[0] - b[0], a[1] - b[1])
    return total
