import itertools
import logging

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from oracles import best_assignment_total, greedy_matching

from mcmlsd.core import LineSegment
from mcmlsd.evaluation import (
    DEFAULT_K_GRID,
    DEFAULT_THRESHOLD,
    CurvePoint,
    EvalFormatError,
    SegmentSet,
    _Evaluator,
    compute_curves,
    evaluate_at_k,
    greedy_point_match,
    hungarian_max,
    max_weight_assignment,
    mean_curves,
    oracle_rank,
    pr_area,
    read_detections_csv,
    read_gt_json,
    relaxed_threshold,
    sample_set,
    segment_association,
    segment_precisions,
    write_curves_csv,
    write_detections_csv,
)
from mcmlsd.synth import random_segments

W, H = 200, 150


def sset(*coords, w=W, h=H):
    return SegmentSet([LineSegment.from_coords(*c) for c in coords], w, h)


def jitter(segs, rng, amount=1.0):
    out = []
    for s in segs:
        x1, y1, x2, y2 = np.array(s.as_tuple()) + rng.uniform(-amount, amount, 4)
        out.append(LineSegment.from_coords(*np.clip([x1, y1, x2, y2], 0, [W - 1, H - 1, W - 1, H - 1])))
    return out


def banded_pair(rng, n_gt=6, n_copies=4, n_junk=4, spread=1.0):
    """Near-horizontal segments one per 12-px row band, so distinct
    detections are never within twice the match threshold of each other.
    Detections are (jittered) copies of ground truth plus distractors."""
    rows = rng.permutation(12)
    segs = []
    for r in rows[: n_gt + n_junk]:
        yc = 8.0 + 12.0 * r
        x1 = rng.uniform(2, 90)
        x2 = x1 + rng.uniform(20, 100)
        y1, y2 = yc + rng.uniform(-2, 2, 2)
        segs.append((x1, y1, x2, y2))
    gt = [LineSegment.from_coords(*c) for c in segs[:n_gt]]
    det = gt[:n_copies] if spread == 0 else [
        LineSegment.from_coords(*(np.array(g.as_tuple()) + rng.uniform(-spread, spread, 4) * [1, 0.3, 1, 0.3]))
        for g in gt[:n_copies]
    ]
    det = det + [LineSegment.from_coords(*c) for c in segs[n_gt:]]
    order = rng.permutation(len(det))
    return SegmentSet(gt, W, H), SegmentSet([det[i] for i in order], W, H)


def random_pair(rng, n_gt=5, n_det=8):
    gt = random_segments(rng, n_gt, W, H, 15, 80, 5)
    det = jitter(gt[: n_det // 2], rng) + random_segments(rng, n_det - n_det // 2, W, H, 10, 60, 5)
    order = rng.permutation(len(det))
    return SegmentSet(gt, W, H), SegmentSet([det[i] for i in order], W, H)


# -- greedy point matching


def test_identical_points_match_perfectly():
    pts = np.array([[0.0, 0.0], [5.0, 1.0], [9.0, 9.0]])
    gi, di, dist = greedy_point_match(pts, pts)
    assert sorted(zip(gi.tolist(), di.tolist())) == [(0, 0), (1, 1), (2, 2)]
    assert np.all(dist == 0)


def test_threshold_gate():
    assert DEFAULT_THRESHOLD == pytest.approx(2.8284, abs=1e-4)
    gi, _, _ = greedy_point_match([[0.0, 0.0]], [[3.0, 0.0]])
    assert len(gi) == 0
    gi, _, _ = greedy_point_match([[0.0, 0.0]], [[2.0, 2.0]])
    assert len(gi) == 1
    with pytest.raises(ValueError):
        greedy_point_match([[0, 0]], [[0, 0]], 0.0)


def test_greedy_matches_oracle(rng):
    for _ in range(30):
        g = rng.uniform(0, 20, (50, 2))
        d = rng.uniform(0, 20, (50, 2))
        gi, di, dist = greedy_point_match(g, d)
        assert len(set(gi.tolist())) == len(gi) and len(set(di.tolist())) == len(di)
        want = greedy_matching(g.tolist(), d.tolist(), DEFAULT_THRESHOLD)
        assert list(zip(gi.tolist(), di.tolist())) == [(i, j) for i, j, _ in want]


def test_greedy_tie_rule_on_integer_grid():
    g = [[x, y] for x in range(4) for y in range(3)]
    d = [[x + 1, y] for x in range(4) for y in range(3)]
    gi, di, _ = greedy_point_match(g, d)
    want = greedy_matching(g, d, DEFAULT_THRESHOLD)
    assert list(zip(gi.tolist(), di.tolist())) == [(i, j) for i, j, _ in want]


# -- assignment


def test_assignment_examples():
    assert hungarian_max([[5]]) == [(0, 0)]
    assert sorted(hungarian_max([[2, 1], [1, 2]])) == [(0, 0), (1, 1)]
    assert hungarian_max(np.zeros((0, 3))) == []
    assert hungarian_max([[0, 0], [0, 0]]) == []


def total(w, pairs):
    return sum(w[a][b] for a, b in pairs)


def test_hungarian_matches_permutations(rng):
    for _ in range(300):
        r, c = rng.integers(1, 7, 2)
        w = rng.integers(0, 20, (r, c))
        pairs = hungarian_max(w)
        assert len({a for a, _ in pairs}) == len(pairs) and len({b for _, b in pairs}) == len(pairs)
        assert total(w, pairs) == best_assignment_total(w)


def test_component_split_matches_scipy(rng):
    for _ in range(100):
        w = rng.integers(0, 30, (25, 18)) * (rng.random((25, 18)) < 0.15)
        rr, cc = linear_sum_assignment(w, maximize=True)
        assert total(w, max_weight_assignment(w)) == int(w[rr, cc].sum())


def test_association_counts_only_assigned_pairs():
    gt = sset((0, 10, 100, 10))
    det = sset((0, 10, 50, 10), (50, 10, 100, 10))
    g_pts, _ = sample_set(gt)
    d_pts, _ = sample_set(det)
    res = segment_association(gt, det, greedy_point_match(g_pts, d_pts))
    assert res.assignment == [(0, 0, 51)]
    assert (res.gt_points, res.det_points, res.matched_points) == (101, 102, 51)


# -- measures


def test_exact_detection_is_perfect():
    gt = sset((10, 10, 150, 20), (30, 100, 120, 40), (5, 140, 190, 140))
    for mode, thr in (("segment", DEFAULT_THRESHOLD), ("pixel", relaxed_threshold(W, H))):
        p = evaluate_at_k(gt, gt, 3, thr, mode)
        assert (p.recall, p.precision) == (1.0, 1.0)
        assert not p.saturated


def test_two_halves_contrast():
    gt = sset((0, 10, 100, 10))
    det = sset((0, 10, 50, 10), (50, 10, 100, 10))
    p = evaluate_at_k(gt, det, 2)
    assert p.recall == pytest.approx(51 / 101)
    assert p.precision == pytest.approx(51 / 102)
    q = evaluate_at_k(gt, det, 2, mode="pixel")
    assert q.recall == 1.0 and q.precision == 1.0
    assert p.total_length == q.total_length == pytest.approx(100.0)


def test_saturation_flag():
    gt = sset((0, 10, 100, 10))
    p = evaluate_at_k(gt, gt, 5)
    assert p.saturated and p.recall == 1.0


def test_curves_monotone(rng):
    for _ in range(10):
        gt, det = random_pair(rng)
        for mode in ("segment", "pixel"):
            curve = compute_curves(gt, det, range(1, 10), DEFAULT_THRESHOLD, mode)
            tl = [p.total_length for p in curve]
            assert tl == sorted(tl)
            if mode == "pixel":
                r = [p.recall for p in curve]
                assert r == sorted(r)
        # with separated detections no new segment can take point matches
        # from an earlier one, so the 1:1 recall is monotone as well
        gt, det = banded_pair(rng)
        r = [p.recall for p in compute_curves(gt, det, range(1, 10))]
        assert r == sorted(r)


def test_segment_recall_can_drop_when_detections_overlap():
    # the short second detection is closer, takes 41 of the greedy point
    # matches of the first, and then loses the 1:1 assignment to it
    gt = sset((0, 10, 100, 10))
    det = sset((0, 12, 100, 12), (0, 10, 40, 10))
    assert evaluate_at_k(gt, det, 1).recall == 1.0
    assert evaluate_at_k(gt, det, 2).recall == pytest.approx(60 / 101)


def test_curve_grid():
    gt = sset((0, 10, 100, 10))
    assert len(compute_curves(gt, gt, [10])) == 1
    assert len(DEFAULT_K_GRID) == 50 and DEFAULT_K_GRID[0] == 10 and DEFAULT_K_GRID[-1] == 500
    with pytest.raises(ValueError):
        compute_curves(gt, gt, [20, 10])
    with pytest.raises(ValueError):
        evaluate_at_k(gt, gt, 0)


def test_one_to_one_discipline(rng):
    for _ in range(10):
        gt, det = random_pair(rng)
        res = _Evaluator(gt, det, DEFAULT_THRESHOLD, "segment").match(len(det))
        gs = [a for a, _, _ in res.assignment]
        ds = [b for _, b, _ in res.assignment]
        assert len(set(gs)) == len(gs) and len(set(ds)) == len(ds)
        assert res.matched_points <= min(res.gt_points, res.det_points)


def test_symmetry(rng):
    for _ in range(10):
        gt, det = random_pair(rng)
        a = evaluate_at_k(gt, det, len(det))
        b = evaluate_at_k(det, gt, len(gt))
        assert a.recall == pytest.approx(b.precision, abs=1e-12)
        assert a.precision == pytest.approx(b.recall, abs=1e-12)


def test_under_segmentation_penalty():
    gt = sset((10, 20, 60, 20), (80, 20, 130, 20))
    merged = sset((10, 20, 130, 20))
    assert evaluate_at_k(gt, merged, 1).recall < evaluate_at_k(gt, gt, 2).recall
    assert evaluate_at_k(gt, merged, 1).recall == pytest.approx(51 / 102)


def test_pixel_recall_dominates(rng):
    for _ in range(15):
        gt, det = random_pair(rng)
        for k in (1, 3, 8):
            seg = evaluate_at_k(gt, det, k)
            pix = evaluate_at_k(gt, det, k, DEFAULT_THRESHOLD, "pixel")
            assert pix.recall >= seg.recall


def test_relaxed_threshold():
    assert relaxed_threshold(640, 480) == pytest.approx(8.0)


# -- oracle ranking


def test_oracle_rank_examples():
    gt = sset((10, 10, 100, 10), (10, 50, 40, 50), (10, 90, 150, 90))
    out = oracle_rank(gt, gt)
    assert [s.length for s in out.segments] == [140.0, 90.0, 30.0]
    det = sset((10, 120, 100, 120), (10, 50, 40, 50))
    out = oracle_rank(gt, det)
    assert out.segments[0].as_tuple() == (10.0, 50.0, 40.0, 50.0)
    assert segment_precisions(gt, det).tolist() == [0.0, 1.0]


def test_oracle_order_sorted_by_precision(rng):
    for _ in range(10):
        gt, det = random_pair(rng)
        prec = segment_precisions(gt, oracle_rank(gt, det))
        assert list(prec) == sorted(prec, reverse=True)


def test_oracle_order_never_loses_to_shuffles(rng):
    # copies of four ground-truth segments among four distractors: the
    # oracle order has the best recall at every k and perfect precision
    # while copies remain (with zero-precision ties the length rule can
    # pick a longer distractor than a shuffle does, so precision beyond
    # that point is not compared)
    for _ in range(10):
        gt, det = banded_pair(rng, spread=0)
        orc = oracle_rank(gt, det)
        for k in range(1, len(det) + 1):
            best = evaluate_at_k(gt, orc, k)
            if k <= 4:
                assert best.precision == 1.0
            for perm in itertools.islice(itertools.permutations(range(len(det))), 0, 400, 37):
                shuffled = SegmentSet([det.segments[i] for i in perm], W, H)
                assert best.recall >= evaluate_at_k(gt, shuffled, k).recall - 1e-12


# -- aggregation


def test_mean_curves_by_hand():
    a = [CurvePoint(10, 0.2, 0.9, 100.0), CurvePoint(20, 0.4, 0.8, 180.0)]
    b = [CurvePoint(10, 0.6, 0.5, 50.0), CurvePoint(20, 0.6, 0.4, 90.0)]
    c = [CurvePoint(10, 0.1, 0.1, 30.0, True), CurvePoint(20, 0.2, 0.3, 30.0, True)]
    m = mean_curves([a, b, c])
    assert [p.k for p in m] == [10, 20]
    assert m[0].recall == pytest.approx(0.3) and m[0].precision == pytest.approx(0.5)
    assert m[1].total_length == pytest.approx(100.0)
    assert m[0].saturated
    with pytest.raises(ValueError):
        mean_curves([a, a[:1]])
    assert mean_curves([]) == []


def test_pr_area():
    assert pr_area([]) == 0.0
    assert pr_area([CurvePoint(1, 0.5, 1.0, 1.0)]) == pytest.approx(0.5)
    curve = [CurvePoint(1, 0.2, 1.0, 1.0), CurvePoint(2, 0.6, 0.5, 1.0)]
    assert pr_area(curve) == pytest.approx(0.2 + 0.4 * 0.75)


# -- file formats


def test_gt_json(tmp_path, caplog):
    p = tmp_path / "gt.json"
    p.write_text('[{"x1": 0, "y1": 1, "x2": 50, "y2": 1}, {"x1": -0.4, "y1": 5, "x2": 10, "y2": 5}]')
    with caplog.at_level(logging.WARNING):
        ss = read_gt_json(p, 100, 100)
    assert len(ss) == 2 and ss.segments[1].p1.x == 0.0
    assert "clamped" in caplog.text
    p.write_text('{"x1": 0}')
    with pytest.raises(EvalFormatError):
        read_gt_json(p, 100, 100)
    p.write_text('[{"x1": 0, "y1": 1, "x2": 50}]')
    with pytest.raises(EvalFormatError, match="segment 0"):
        read_gt_json(p, 100, 100)
    p.write_text("[")
    with pytest.raises(EvalFormatError, match="invalid JSON"):
        read_gt_json(p, 100, 100)


def test_detection_csv_round_trip(tmp_path):
    det = sset((10.25, 10, 150, 20.5), (30, 100, 120, 40))
    p = tmp_path / "d.csv"
    write_detections_csv(p, det.segments, [3.5, 1.25])
    back = read_detections_csv(p, W, H)
    assert [s.as_tuple() for s in back.segments] == [s.as_tuple() for s in det.segments]
    assert back.scores == [3.5, 1.25]


def test_detection_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("rank,x1,y1,x2,y2\n")
    with pytest.raises(EvalFormatError, match=":1:"):
        read_detections_csv(p, W, H)
    p.write_text("rank,x1,y1,x2,y2,score\n1,0,0,5,5,1\n2,0,0,5\n")
    with pytest.raises(EvalFormatError, match=":3:"):
        read_detections_csv(p, W, H)
    p.write_text("rank,x1,y1,x2,y2,score\n1,0,0,5,5,1\n2,0,zz,5,5,1\n")
    with pytest.raises(EvalFormatError, match=":3:"):
        read_detections_csv(p, W, H)
    p.write_text("rank,x1,y1,x2,y2,score\n2,0,0,5,5,1\n1,0,0,5,6,1\n")
    with pytest.raises(EvalFormatError, match="sorted"):
        read_detections_csv(p, W, H)


def test_curves_csv(tmp_path):
    p = tmp_path / "c.csv"
    write_curves_csv(p, [CurvePoint(10, 0.5, 0.25, 12.0)])
    assert p.read_text().splitlines() == ["k,recall,precision,total_length", "10,0.500000,0.250000,12.0000"]
