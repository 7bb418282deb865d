"""Metric correctness: cycle comparison, polygon area ratios against a
Monte-Carlo oracle, triangle-set comparison, tour validity, and the
report aggregation rules."""

import numpy as np
import pytest
from matplotlib.path import Path

from ptrgeo.data import GenSpec, generate
from ptrgeo.geometry import convex_hull, delaunay
from ptrgeo.metrics import (
    EvalReport,
    area_coverage,
    evaluate_model,
    evaluate_solver,
    hull_accuracy,
    triangulation_metrics,
    tsp_metrics,
)
from ptrgeo.models import make_ptrnet

SQUARE = ((0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9))
SQUARE_TRUTH = (1, 2, 3, 4, 1)


def _mc_coverage(pred_ids, truth_ids, points, samples=600_000):
    """Monte-Carlo estimate of area(pred & truth) / area(truth)."""
    pts = np.asarray(points, dtype=float)
    rng = np.random.default_rng(424242)
    lo, hi = pts.min(), pts.max()
    xs = rng.uniform(lo, hi, size=(samples, 2))
    box = (hi - lo) ** 2
    inside_p = Path([pts[i - 1] for i in pred_ids]).contains_points(xs)
    inside_t = Path([pts[i - 1] for i in truth_ids]).contains_points(xs)
    both = np.count_nonzero(inside_p & inside_t) / samples * box
    truth = np.count_nonzero(inside_t) / samples * box
    return both / truth


class TestHullAccuracy:
    def test_rotated_cycle_matches(self):
        assert hull_accuracy((2, 3, 4, 1), SQUARE_TRUTH)
        assert hull_accuracy((3, 4, 1, 2, 3), SQUARE_TRUTH)

    def test_reversed_cycle_rejected(self):
        # truth is counter-clockwise; a clockwise reading is a different answer
        assert not hull_accuracy((4, 3, 2, 1), SQUARE_TRUTH)

    def test_missing_and_extra_vertices(self):
        assert not hull_accuracy((1, 2, 3), SQUARE_TRUTH)
        assert not hull_accuracy((1, 2, 3, 4, 2), SQUARE_TRUTH)

    def test_frame_tokens_ignored(self):
        assert hull_accuracy((0, 1, 2, 3, 4, 0), SQUARE_TRUTH)

    def test_empty_prediction(self):
        assert not hull_accuracy((), SQUARE_TRUTH)
        assert not hull_accuracy((0,), SQUARE_TRUTH)

    def test_resolved_examples_all_match(self):
        exs = list(generate(GenSpec(task="hull", count=300, n_min=3, n_max=12, seed=77)))
        assert all(hull_accuracy(convex_hull(ex.points), ex.output) for ex in exs)


class TestAreaCoverage:
    def test_identical_polygon_is_one(self):
        assert area_coverage(SQUARE_TRUTH, SQUARE_TRUTH, SQUARE) == 1.0

    def test_rotation_is_one(self):
        assert area_coverage((3, 4, 1, 2), SQUARE_TRUTH, SQUARE) == 1.0

    def test_self_intersection_is_none(self):
        assert area_coverage((1, 3, 2, 4), SQUARE_TRUTH, SQUARE) is None

    def test_malformed_predictions_are_none(self):
        assert area_coverage((1, 2), SQUARE_TRUTH, SQUARE) is None
        assert area_coverage((1, 2, 2, 3), SQUARE_TRUTH, SQUARE) is None
        assert area_coverage((1, 2, 5), SQUARE_TRUTH, SQUARE) is None
        assert area_coverage((0, 1, 2), SQUARE_TRUTH, SQUARE) is None

    def test_half_square(self):
        assert area_coverage((1, 2, 3), SQUARE_TRUTH, SQUARE) == pytest.approx(0.5)

    def test_dented_hull_against_monte_carlo(self):
        # pull one hull vertex toward the centroid so the prediction is a
        # simple but non-convex underestimate of the hull
        rng = np.random.default_rng(5)
        pts = list(map(tuple, rng.random((9, 2))))
        truth = convex_hull(pts)
        ring = truth[:-1]
        centroid = np.mean([pts[i - 1] for i in ring], axis=0)
        pts.append(tuple(0.55 * np.asarray(pts[ring[1] - 1]) + 0.45 * centroid))
        pred = [len(pts) if i == ring[1] else i for i in ring]
        got = area_coverage(pred, truth, pts)
        want = _mc_coverage(pred, truth, pts)
        assert got == pytest.approx(want, abs=0.005)
        assert got < 1.0

    def test_clamped_at_one(self):
        # predictions cannot score above full coverage even if they spill
        # outside the hull
        pts = list(SQUARE) + [(0.5, 0.99)]
        cov = area_coverage((1, 2, 3, 5, 4), (1, 2, 3, 4, 1), pts)
        assert cov <= 1.0
        assert cov == pytest.approx(1.0, rel=1e-12)


class TestTriangulationMetrics:
    TRUTH = (1, 2, 4, 1, 2, 5, 1, 3, 4)

    def test_exact_match(self):
        assert triangulation_metrics(self.TRUTH, self.TRUTH) == (True, 1.0)

    def test_triangle_order_and_vertex_order_irrelevant(self):
        shuffled = (5, 1, 2, 4, 2, 1, 3, 1, 4)
        assert triangulation_metrics(shuffled, self.TRUTH) == (True, 1.0)

    def test_missing_triangle(self):
        exact, cov = triangulation_metrics((1, 2, 4, 1, 2, 5), self.TRUTH)
        assert not exact
        assert cov == pytest.approx(2 / 3)

    def test_wrong_triangle_counts_against_exactness_only(self):
        exact, cov = triangulation_metrics((1, 2, 4, 1, 2, 5, 1, 3, 4, 2, 3, 5),
                                           self.TRUTH)
        assert not exact
        assert cov == 1.0

    def test_trailing_partial_triple(self):
        exact, cov = triangulation_metrics(self.TRUTH + (1, 2), self.TRUTH)
        assert not exact
        assert cov == 1.0

    def test_frame_tokens_ignored(self):
        assert triangulation_metrics((0,) + self.TRUTH + (0,), self.TRUTH) == (True, 1.0)

    def test_empty_prediction(self):
        assert triangulation_metrics((), self.TRUTH) == (False, 0.0)

    def test_resolved_examples_all_exact(self):
        exs = list(generate(GenSpec(task="delaunay", count=100, n_min=4, n_max=10, seed=78)))
        for ex in exs:
            flat = tuple(i for tri in delaunay(ex.points) for i in tri)
            assert triangulation_metrics(flat, ex.output) == (True, 1.0)


class TestTspMetrics:
    def test_unit_square_perimeter(self):
        pts = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
        assert tsp_metrics((1, 2, 3, 4), pts) == (True, 4.0)

    def test_rotation_same_length(self):
        pts = tuple(map(tuple, np.random.default_rng(3).random((6, 2))))
        _, a = tsp_metrics((1, 2, 3, 4, 5, 6), pts)
        _, b = tsp_metrics((4, 5, 6, 1, 2, 3), pts)
        assert a == pytest.approx(b, rel=1e-12)

    @pytest.mark.parametrize("bad", [(1, 2, 3, 3), (1, 2, 3), (1, 2, 3, 5), ()])
    def test_invalid_tours(self, bad):
        pts = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
        assert tsp_metrics(bad, pts) == (False, None)

    def test_frame_tokens_ignored(self):
        pts = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
        assert tsp_metrics((0, 2, 3, 4, 1, 0), pts) == (True, 4.0)


def _hull_records(total, bad):
    recs = []
    for i in range(total):
        broken = i < bad
        recs.append({"index": i, "n": 4, "cap_hit": False,
                     "pred": (1, 2, 3, 4),
                     "correct": not broken,
                     "coverage": None if broken else 1.0})
    return recs


class TestEvalReport:
    def test_aggregates_follow_records(self):
        rep = EvalReport("hull", "greedy", "none", _hull_records(10, 0))
        assert rep.aggregates["count"] == 10
        assert rep.aggregates["accuracy_pct"] == 100.0
        rep.records.pop()
        assert rep.aggregates["count"] == 9

    def test_not_simple_fail_is_strictly_greater_than_one_percent(self):
        at_limit = EvalReport("hull", "greedy", "none", _hull_records(200, 2))
        assert at_limit.aggregates["area_coverage_pct"] == 100.0
        assert at_limit.aggregates["not_simple_pct"] == 1.0
        over = EvalReport("hull", "greedy", "none", _hull_records(200, 3))
        assert over.aggregates["area_coverage_pct"] == "FAIL"

    def test_format_text_flat_and_deterministic(self):
        rep = EvalReport("hull", "greedy", "none", _hull_records(4, 0))
        text = rep.format_text()
        assert text == rep.format_text()
        assert text.endswith("\n")
        for line in text.strip().splitlines():
            assert line.count("=") == 1

    def test_per_example_tsv_renders_none_as_not_simple(self):
        rep = EvalReport("hull", "greedy", "none", _hull_records(3, 1))
        lines = rep.per_example_tsv().strip().splitlines()
        assert lines[0].split("\t") == ["index", "n", "correct", "coverage",
                                       "cap_hit", "pred"]
        assert lines[1].split("\t")[3] == "not_simple"
        assert lines[2].split("\t")[3] == "1"
        assert lines[1].split("\t")[5] == "1 2 3 4"

    def test_tsp_mean_over_valid_only(self):
        recs = [
            {"index": 0, "n": 4, "cap_hit": False, "pred": (1, 2, 3, 4),
             "valid": True, "length": 4.0},
            {"index": 1, "n": 4, "cap_hit": True, "pred": (1, 1, 1),
             "valid": False, "length": None},
        ]
        agg = EvalReport("tsp", "greedy", "none", recs).aggregates
        assert agg["validity_pct"] == 50.0
        assert agg["mean_tour_length"] == 4.0
        assert agg["invalid_count"] == 1
        assert agg["cap_hits"] == 1


class TestEvaluateSolver:
    def test_truth_echo_is_perfect_on_every_task(self):
        for task, key in (("hull", "accuracy_pct"), ("delaunay", "accuracy_pct"),
                          ("tsp", "validity_pct")):
            exs = list(generate(GenSpec(task=task, count=20, n_min=4, n_max=7, seed=5)))
            agg = evaluate_solver("truth", exs).aggregates
            assert agg[key] == 100.0

    def test_exact_geometry_solvers_match_labels(self):
        exs = list(generate(GenSpec(task="hull", count=30, n_min=3, n_max=9, seed=6)))
        assert evaluate_solver("exact", exs).aggregates["accuracy_pct"] == 100.0
        exs = list(generate(GenSpec(task="delaunay", count=30, n_min=4, n_max=9, seed=6)))
        assert evaluate_solver("exact", exs).aggregates["accuracy_pct"] == 100.0

    def test_tsp_solver_ordering(self):
        exs = list(generate(GenSpec(task="tsp", count=40, n_min=6, n_max=8, seed=7)))
        means = {}
        for name in ("optimal", "a1", "a2", "a3"):
            agg = evaluate_solver(name, exs).aggregates
            assert agg["validity_pct"] == 100.0
            means[name] = agg["mean_tour_length"]
        assert means["optimal"] <= means["a1"] + 1e-12
        assert means["optimal"] <= means["a2"] + 1e-12
        assert means["optimal"] <= means["a3"] + 1e-12

    def test_solver_task_mismatch(self):
        exs = list(generate(GenSpec(task="hull", count=2, n_min=4, n_max=4, seed=8)))
        with pytest.raises(ValueError):
            evaluate_solver("a1", exs)
        with pytest.raises(ValueError):
            evaluate_solver("nearest", exs)

    def test_empty_and_mixed_sets_rejected(self):
        with pytest.raises(ValueError):
            evaluate_solver("truth", [])
        hull = list(generate(GenSpec(task="hull", count=1, n_min=4, n_max=4, seed=9)))
        tsp = list(generate(GenSpec(task="tsp", count=1, n_min=4, n_max=4, seed=9)))
        with pytest.raises(ValueError):
            evaluate_solver("truth", hull + tsp)


class TestEvaluateModel:
    def test_untrained_model_reports_without_error(self):
        m = make_ptrnet(hidden=8, seed=1)
        for task in ("hull", "delaunay", "tsp"):
            exs = list(generate(GenSpec(task=task, count=4, n_min=5, n_max=5, seed=10)))
            rep = evaluate_model(m, exs, width=2)
            assert rep.decoder == "beam:2"
            assert len(rep.records) == 4
            assert rep.format_text()
            assert rep.per_example_tsv()

    def test_constrained_tsp_always_valid(self):
        m = make_ptrnet(hidden=8, seed=2)
        exs = list(generate(GenSpec(task="tsp", count=10, n_min=4, n_max=8, seed=11)))
        rep = evaluate_model(m, exs, width=1, constraint="valid_tour")
        assert rep.aggregates["validity_pct"] == 100.0
        assert rep.constraint == "valid_tour"

    def test_greedy_decoder_name(self):
        m = make_ptrnet(hidden=8, seed=1)
        exs = list(generate(GenSpec(task="hull", count=2, n_min=4, n_max=4, seed=12)))
        assert evaluate_model(m, exs).decoder == "greedy"
