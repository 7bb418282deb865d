"""Planar geometry: convex hull, Delaunay triangulation, polygon utilities.

Solvers are exact at desk scale with documented tolerance bands instead of
adaptive-precision predicates.  Points are (x, y) float pairs; point sets
are sequences of those (numpy arrays of shape (n, 2) work).  All indices
in solver outputs are 1-based positions into the input point set.
"""

from __future__ import annotations

import math
from typing import Sequence

__all__ = [
    "CLOCKWISE",
    "COLLINEAR",
    "COUNTERCLOCKWISE",
    "DegenerateInputError",
    "orientation",
    "convex_hull",
    "delaunay",
    "incenter",
    "is_simple",
    "shoelace_area",
    "clip_to_convex",
]

CLOCKWISE = -1
COLLINEAR = 0
COUNTERCLOCKWISE = 1

# |cross| below ORIENT_EPS * scale^2 counts as collinear
ORIENT_EPS = 1e-12
# in-circle determinant below INCIRCLE_EPS * scale^4 counts as on-circle
INCIRCLE_EPS = 1e-10

# Super-triangle enclosing the unit square.  The margin must exceed any
# plausible circumradius of an empty circle through three input points:
# thin boundary triangles produce circles with radii in the hundreds, and
# a super vertex falling inside one leaves a hole in the triangulation.
# 1e6 pushes the defect probability below ~1e-7 per random instance while
# keeping the in-circle determinant well within float64 range.
_SUPER = ((-1e6, -1e6), (2e6, -1e6), (-1e6, 2e6))


class DegenerateInputError(ValueError):
    """Input admits no well-defined answer (too few / collinear / duplicate points)."""


def orientation(p, q, r) -> int:
    """Turn direction of the path p -> q -> r.

    Returns COUNTERCLOCKWISE, CLOCKWISE, or COLLINEAR; the collinear band
    is |cross| <= 1e-12 * scale^2 where scale is the largest coordinate
    spread among the difference vectors.
    """
    ax, ay = q[0] - p[0], q[1] - p[1]
    bx, by = r[0] - p[0], r[1] - p[1]
    cross = ax * by - ay * bx
    scale = max(abs(ax), abs(ay), abs(bx), abs(by))
    if abs(cross) <= ORIENT_EPS * scale * scale:
        return COLLINEAR
    return COUNTERCLOCKWISE if cross > 0.0 else CLOCKWISE


def _check_points(points, min_n: int):
    pts = [(float(p[0]), float(p[1])) for p in points]
    if len(pts) < min_n:
        raise DegenerateInputError(f"need at least {min_n} points, got {len(pts)}")
    if len(set(pts)) != len(pts):
        raise DegenerateInputError("duplicate points")
    return pts


def convex_hull(points: Sequence) -> list[int]:
    """Convex hull as a closed, counter-clockwise cycle of 1-based indices.

    Monotone chain.  Collinear boundary points are excluded, so every
    returned index is an extreme vertex.  The cycle starts at the hull
    vertex with the lowest index and repeats it at the end.
    """
    pts = _check_points(points, 3)
    order = sorted(range(len(pts)), key=lambda i: pts[i])

    def chain(indices):
        out = []
        for i in indices:
            while len(out) >= 2 and orientation(pts[out[-2]], pts[out[-1]], pts[i]) != COUNTERCLOCKWISE:
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(reversed(order))
    cycle = lower[:-1] + upper[:-1]
    if len(cycle) < 3:
        raise DegenerateInputError("all points collinear")
    start = cycle.index(min(cycle))
    cycle = cycle[start:] + cycle[:start]
    return [i + 1 for i in cycle] + [cycle[0] + 1]


def _in_circle(a, b, c, d) -> bool:
    """True if d is strictly inside the circumcircle of triangle (a, b, c).

    Sign test on the 3x3 lifted determinant; (a, b, c) may wind either way.
    Near-cocircular cases inside the tolerance band count as outside.
    """
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    det = (adx * (bdy * cd - bd * cdy)
           - ady * (bdx * cd - bd * cdx)
           + ad * (bdx * cdy - bdy * cdx))
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if cross < 0.0:
        det = -det
    # relative band sized by the permanent of the absolute matrix, which
    # mirrors the determinant's term structure and so stays proportional
    # even when one row (a far-away super vertex) dwarfs the others
    perm = (abs(adx) * (abs(bdy) * cd + bd * abs(cdy))
            + abs(ady) * (abs(bdx) * cd + bd * abs(cdx))
            + ad * (abs(bdx) * abs(cdy) + abs(bdy) * abs(cdx)))
    return det > INCIRCLE_EPS * perm


def delaunay(points: Sequence) -> list[tuple[int, int, int]]:
    """Delaunay triangulation by incremental insertion (Bowyer-Watson).

    Intended for points in the unit square (the enclosing super-triangle
    is fixed).  Returns index triples, each sorted ascending, ordered by
    incenter coordinates lexicographically.
    """
    pts = _check_points(points, 3)
    n = len(pts)
    all_pts = pts + list(_SUPER)
    s1, s2, s3 = n, n + 1, n + 2
    tris: list[tuple[int, int, int]] = [(s1, s2, s3)]
    for i in range(n):
        p = pts[i]
        bad = [t for t in tris
               if _in_circle(all_pts[t[0]], all_pts[t[1]], all_pts[t[2]], p)]
        edge_count: dict[tuple[int, int], int] = {}
        for (u, v, w) in bad:
            for e in ((u, v), (v, w), (w, u)):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        bad_set = set(bad)
        tris = [t for t in tris if t not in bad_set]
        for (u, v), count in edge_count.items():
            if count == 1:
                tris.append((u, v, i))
    real = [tuple(sorted(t)) for t in tris if max(t) < n]
    if not real:
        raise DegenerateInputError("all points collinear")
    keyed = []
    for t in real:
        cx, cy = incenter(pts[t[0]], pts[t[1]], pts[t[2]])
        keyed.append((cx, cy, t))
    keyed.sort()
    return [(t[0] + 1, t[1] + 1, t[2] + 1) for _, _, t in keyed]


def incenter(a, b, c) -> tuple[float, float]:
    """Incenter of a triangle: side-length weighted average of the vertices."""
    la = math.dist(b, c)  # opposite a
    lb = math.dist(c, a)
    lc = math.dist(a, b)
    if orientation(a, b, c) == COLLINEAR:
        raise DegenerateInputError("zero-area triangle has no incenter")
    perim = la + lb + lc
    return ((la * a[0] + lb * b[0] + lc * c[0]) / perim,
            (la * a[1] + lb * b[1] + lc * c[1]) / perim)


# ---------------------------------------------------------------------------
# polygon utilities


def _on_segment(p, q, r) -> bool:
    """True if collinear point q lies within the bounding box of segment p-r."""
    return (min(p[0], r[0]) <= q[0] <= max(p[0], r[0])
            and min(p[1], r[1]) <= q[1] <= max(p[1], r[1]))


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """True if closed segments p1-p2 and p3-p4 share any point."""
    d1 = orientation(p3, p4, p1)
    d2 = orientation(p3, p4, p2)
    d3 = orientation(p1, p2, p3)
    d4 = orientation(p1, p2, p4)
    if d1 != d2 and d3 != d4 and d1 != COLLINEAR and d2 != COLLINEAR \
            and d3 != COLLINEAR and d4 != COLLINEAR:
        return True
    if d1 == COLLINEAR and _on_segment(p3, p1, p4):
        return True
    if d2 == COLLINEAR and _on_segment(p3, p2, p4):
        return True
    if d3 == COLLINEAR and _on_segment(p1, p3, p2):
        return True
    if d4 == COLLINEAR and _on_segment(p1, p4, p2):
        return True
    return False


def is_simple(ring: Sequence) -> bool:
    """True if the polygon has no self-intersections.

    The ring is open: vertices only, no closing repeat.  Adjacent edges may
    share their common endpoint; any other contact (crossing, touching,
    repeated vertices) makes the polygon non-simple.  O(k^2) pairwise test.
    """
    poly = [(float(p[0]), float(p[1])) for p in ring]
    k = len(poly)
    if k < 3:
        raise DegenerateInputError(f"polygon needs >= 3 vertices, got {k}")
    if len(set(poly)) != k:
        return False
    for i in range(k):
        a1, a2 = poly[i], poly[(i + 1) % k]
        for j in range(i + 1, k):
            if (j + 1) % k == i or (i + 1) % k == j:
                continue  # adjacent edges share an endpoint by construction
            b1, b2 = poly[j], poly[(j + 1) % k]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def shoelace_area(ring: Sequence) -> float:
    """Signed polygon area: positive for counter-clockwise winding."""
    poly = [(float(p[0]), float(p[1])) for p in ring]
    if len(poly) < 3:
        raise DegenerateInputError(f"polygon needs >= 3 vertices, got {len(poly)}")
    total = 0.0
    for i in range(len(poly)):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % len(poly)]
        total += x1 * y2 - x2 * y1
    return 0.5 * total


def clip_to_convex(subject: Sequence, convex_clip: Sequence) -> float:
    """Area of the intersection of a polygon with a convex polygon.

    Sutherland-Hodgman clipping of the subject against each edge of the
    convex clip region, then unsigned shoelace area of the result.  The
    clip polygon must be convex; the subject should be simple (clipping a
    self-intersecting subject has no meaningful area).
    """
    subj = [(float(p[0]), float(p[1])) for p in subject]
    clip = [(float(p[0]), float(p[1])) for p in convex_clip]
    if len(subj) < 3 or len(clip) < 3:
        raise DegenerateInputError("clip and subject need >= 3 vertices")
    if shoelace_area(clip) < 0:
        clip = clip[::-1]

    def inside(p, a, b):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0

    def line_cross(a, b, p, q):
        # intersection of line a-b with segment p-q
        a1 = b[1] - a[1]
        b1 = a[0] - b[0]
        c1 = a1 * a[0] + b1 * a[1]
        a2 = q[1] - p[1]
        b2 = p[0] - q[0]
        c2 = a2 * p[0] + b2 * p[1]
        det = a1 * b2 - a2 * b1
        if det == 0.0:
            return p
        return ((b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det)

    output = subj
    for i in range(len(clip)):
        if len(output) < 3:
            return 0.0
        a, b = clip[i], clip[(i + 1) % len(clip)]
        current, output = output, []
        for j in range(len(current)):
            p, q = current[j], current[(j + 1) % len(current)]
            pin, qin = inside(p, a, b), inside(q, a, b)
            if pin:
                output.append(p)
                if not qin:
                    output.append(line_cross(a, b, p, q))
            elif qin:
                output.append(line_cross(a, b, p, q))
    if len(output) < 3:
        return 0.0
    return abs(shoelace_area(output))
