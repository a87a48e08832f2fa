"""Segment-level evaluation of ranked line segment detections.

Ground truth and detections are sampled at one-pixel spacing.  Candidate
point pairs within a distance threshold are matched greedily (closest
first, each point at most once), the matched-point counts between segment
pairs form a weight matrix, and a maximum-weight 1:1 assignment of
segments decides which point matches count.  A relaxed pixel-level mode
drops both the segment and the point 1:1 constraints.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import LineSegment, clamp_segment, points_to_segment_distance, sample_segment_array

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 2 * math.sqrt(2)
DEFAULT_K_GRID = tuple(range(10, 501, 10))
MODES = ("segment", "pixel")


class EvalFormatError(ValueError):
    pass


def relaxed_threshold(width: int, height: int) -> float:
    """Threshold of the pixel-level protocol: 1% of the image diagonal."""
    return 0.01 * math.hypot(width, height)


@dataclass
class SegmentSet:
    segments: list[LineSegment]
    width: int
    height: int
    scores: list[float] | None = None

    def __len__(self) -> int:
        return len(self.segments)

    def top(self, k: int) -> "SegmentSet":
        sc = None if self.scores is None else self.scores[:k]
        return SegmentSet(self.segments[:k], self.width, self.height, sc)

    @classmethod
    def clamped(cls, segments, width: int, height: int, scores=None, source: str = "segments") -> "SegmentSet":
        out, n_clamped = [], 0
        keep_scores = [] if scores is not None else None
        for i, s in enumerate(segments):
            c = clamp_segment(s, width, height)
            if c.as_tuple() != s.as_tuple():
                n_clamped += 1
            if c.length <= 0:
                log.warning("%s: segment %d collapses after clamping; dropped", source, i)
                continue
            out.append(c)
            if keep_scores is not None:
                keep_scores.append(scores[i])
        if n_clamped:
            log.warning("%s: %d segment(s) clamped to the %dx%d image", source, n_clamped, width, height)
        return cls(out, width, height, keep_scores)


@dataclass
class MatchResult:
    assignment: list[tuple[int, int, int]]
    gt_points: int
    det_points: int
    matched_points: int


@dataclass
class CurvePoint:
    k: int
    recall: float
    precision: float
    total_length: float
    saturated: bool = field(default=False, compare=False)


# -- sampling and point matching ---------------------------------------------


def sample_set(ss: SegmentSet, spacing: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """All sample points of a segment set and the segment index of each."""
    if not len(ss):
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    pts = [sample_segment_array(s, spacing) for s in ss.segments]
    ids = np.repeat(np.arange(len(pts)), [len(p) for p in pts])
    return np.concatenate(pts), ids


def greedy_point_match(gt_points, det_points, threshold: float = DEFAULT_THRESHOLD):
    """Greedy closest-first 1:1 matching of point sets.

    Returns (gt point indices, det point indices, distances) of the
    accepted pairs, in acceptance order.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    g = np.asarray(gt_points, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(det_points, dtype=np.float64).reshape(-1, 2)
    empty = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0))
    if not len(g) or not len(d):
        return empty
    pairs = cKDTree(g).sparse_distance_matrix(cKDTree(d), threshold, output_type="ndarray")
    if not len(pairs):
        return empty
    gi = pairs["i"].astype(np.int64)
    di = pairs["j"].astype(np.int64)
    # recompute distances directly so ties are exact and reproducible
    dist = np.hypot(g[gi, 0] - d[di, 0], g[gi, 1] - d[di, 1])
    ok = dist <= threshold
    gi, di, dist = gi[ok], di[ok], dist[ok]
    order = np.lexsort((di, gi, dist))
    used_g = bytearray(len(g))
    used_d = bytearray(len(d))
    acc = []
    for o, a, b in zip(order.tolist(), gi[order].tolist(), di[order].tolist()):
        if used_g[a] or used_d[b]:
            continue
        used_g[a] = used_d[b] = 1
        acc.append(o)
    acc = np.asarray(acc, dtype=np.int64)
    return gi[acc], di[acc], dist[acc]


# -- maximum-weight assignment -------------------------------------------------


def _hungarian_min(cost: np.ndarray) -> np.ndarray:
    """Shortest augmenting path Hungarian method on a square cost matrix.

    Returns ``col_of_row``.  Runs in O(n^3) with the inner column scan
    vectorised.
    """
    n = cost.shape[0]
    inf = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=np.int64)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = c[i0] - u[i0] - v
            free = ~used
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            cand[0] = inf
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row


def hungarian_max(weights) -> list[tuple[int, int]]:
    """Maximum-weight 1:1 assignment of a non-negative rectangular matrix.

    The matrix is zero-padded to square; pairs of zero weight are omitted
    from the result.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weights must be a 2-D matrix")
    rows, cols = w.shape
    if rows == 0 or cols == 0:
        return []
    n = max(rows, cols)
    sq = np.zeros((n, n))
    sq[:rows, :cols] = w
    col_of_row = _hungarian_min(sq.max() - sq)
    return [(r, int(c)) for r, c in enumerate(col_of_row) if r < rows and c < cols and w[r, c] > 0]


def _components(w: np.ndarray):
    """Connected components of the bipartite support graph of ``w``."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    rows, cols = w.shape
    r, c = np.nonzero(w)
    n = rows + cols
    adj = coo_matrix((np.ones(len(r)), (r, c + rows)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    for lab in np.unique(labels[np.concatenate([r, c + rows])]) if len(r) else []:
        members = np.flatnonzero(labels == lab)
        yield members[members < rows], members[members >= rows] - rows


def max_weight_assignment(weights) -> list[tuple[int, int]]:
    """:func:`hungarian_max` applied per connected component of the
    non-zero support, which is exact and keeps the matrices small."""
    w = np.asarray(weights, dtype=np.float64)
    out = []
    for rs, cs in _components(w):
        sub = w[np.ix_(rs, cs)]
        out.extend((int(rs[a]), int(cs[b])) for a, b in hungarian_max(sub))
    return sorted(out)


def segment_association(gt: SegmentSet, det: SegmentSet, point_matches, gt_ids=None, det_ids=None) -> MatchResult:
    """1:1 segment assignment maximising matched points.

    ``point_matches`` is the (gt point, det point) index output of
    :func:`greedy_point_match` over :func:`sample_set` samples.
    """
    g_pts, g_ids = sample_set(gt) if gt_ids is None else (None, gt_ids)
    d_pts, d_ids = sample_set(det) if det_ids is None else (None, det_ids)
    gi, di = point_matches[0], point_matches[1]
    w = np.zeros((len(gt), len(det)), dtype=np.int64)
    if len(gi):
        np.add.at(w, (g_ids[gi], d_ids[di]), 1)
    pairs = max_weight_assignment(w)
    assignment = [(g, d, int(w[g, d])) for g, d in pairs]
    return MatchResult(assignment, len(g_ids), len(d_ids), sum(a[2] for a in assignment))


# -- measures -----------------------------------------------------------------


class _Evaluator:
    """Caches ground-truth samples across the k values of one image."""

    def __init__(self, gt: SegmentSet, det: SegmentSet, threshold: float, mode: str):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if threshold <= 0:
            raise ValueError("threshold must be positive")
        self.gt, self.det, self.threshold, self.mode = gt, det, threshold, mode
        self.g_pts, self.g_ids = sample_set(gt)
        self.det_samples = [sample_segment_array(s) for s in det.segments]
        self.lengths = np.array([s.length for s in det.segments])
        if mode == "pixel":
            self._det_hit = [self._near_any(p, gt.segments) for p in self.det_samples]
            self._gt_hit_by = [self._near(self.g_pts, s) for s in det.segments]

    def _near(self, pts, seg):
        return points_to_segment_distance(pts, seg) <= self.threshold

    def _near_any(self, pts, segs):
        hit = np.zeros(len(pts), dtype=bool)
        for s in segs:
            hit |= self._near(pts, s)
        return hit

    def at_k(self, k: int) -> CurvePoint:
        if k < 1:
            raise ValueError("k must be >= 1")
        n = len(self.det)
        saturated = k > n
        k_eff = min(k, n)
        total_length = float(self.lengths[:k_eff].sum())
        n_gt = len(self.g_pts)
        if k_eff == 0:
            return CurvePoint(k, 0.0, 0.0, 0.0, saturated)
        if self.mode == "pixel":
            det_hits = sum(int(h.sum()) for h in self._det_hit[:k_eff])
            det_total = sum(len(p) for p in self.det_samples[:k_eff])
            gt_hit = np.zeros(n_gt, dtype=bool)
            for h in self._gt_hit_by[:k_eff]:
                gt_hit |= h
            recall = float(gt_hit.sum()) / n_gt if n_gt else 0.0
            return CurvePoint(k, recall, det_hits / det_total, total_length, saturated)
        res = self.match(k_eff)
        recall = res.matched_points / n_gt if n_gt else 0.0
        precision = res.matched_points / res.det_points if res.det_points else 0.0
        return CurvePoint(k, recall, precision, total_length, saturated)

    def match(self, k: int) -> MatchResult:
        d_samples = self.det_samples[:k]
        d_pts = np.concatenate(d_samples) if d_samples else np.zeros((0, 2))
        d_ids = np.repeat(np.arange(len(d_samples)), [len(p) for p in d_samples])
        pm = greedy_point_match(self.g_pts, d_pts, self.threshold)
        return segment_association(self.gt, self.det.top(k), pm, self.g_ids, d_ids)


def evaluate_at_k(gt: SegmentSet, det: SegmentSet, k: int, threshold: float = DEFAULT_THRESHOLD,
                  mode: str = "segment") -> CurvePoint:
    return _Evaluator(gt, det, threshold, mode).at_k(k)


def compute_curves(gt: SegmentSet, det: SegmentSet, k_values=DEFAULT_K_GRID,
                   threshold: float = DEFAULT_THRESHOLD, mode: str = "segment") -> list[CurvePoint]:
    k_values = list(k_values)
    if not k_values or any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise ValueError("k_values must be a non-empty ascending sequence")
    ev = _Evaluator(gt, det, threshold, mode)
    return [ev.at_k(k) for k in k_values]


def segment_precisions(gt: SegmentSet, det: SegmentSet, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Fraction of each detector segment's points with a 1:1 ground-truth
    match, after association over all detections."""
    out = np.zeros(len(det))
    if not len(det):
        return out
    ev = _Evaluator(gt, det, threshold, "segment")
    res = ev.match(len(det))
    for _, d, count in res.assignment:
        out[d] = count / len(ev.det_samples[d])
    return out


def oracle_rank(gt: SegmentSet, det: SegmentSet, threshold: float = DEFAULT_THRESHOLD) -> SegmentSet:
    """Detections reordered by ground-truth precision, ties by length."""
    prec = segment_precisions(gt, det, threshold)
    lengths = np.array([s.length for s in det.segments])
    order = np.lexsort((np.arange(len(det)), -lengths, -prec))
    scores = None if det.scores is None else [det.scores[i] for i in order]
    return SegmentSet([det.segments[i] for i in order], det.width, det.height, scores)


def mean_curves(curves_per_image) -> list[CurvePoint]:
    """Per-k mean over images (uniform image weight)."""
    curves_per_image = [list(c) for c in curves_per_image]
    if not curves_per_image:
        return []
    ks = [c.k for c in curves_per_image[0]]
    for c in curves_per_image:
        if [p.k for p in c] != ks:
            raise ValueError("curves use different k grids")
    out = []
    for i, k in enumerate(ks):
        pts = [c[i] for c in curves_per_image]
        out.append(CurvePoint(
            k,
            float(np.mean([p.recall for p in pts])),
            float(np.mean([p.precision for p in pts])),
            float(np.mean([p.total_length for p in pts])),
            any(p.saturated for p in pts),
        ))
    return out


def pr_area(curve) -> float:
    """Trapezoidal area under precision as a function of recall, with the
    curve extended flat from its lowest-recall point back to recall 0."""
    pts = sorted((p.recall, p.precision) for p in curve)
    if not pts:
        return 0.0
    pts = [(0.0, pts[0][1])] + pts
    r = np.array([p[0] for p in pts])
    pr = np.array([p[1] for p in pts])
    return float(np.sum(np.diff(r) * (pr[1:] + pr[:-1]) / 2))


# -- file formats -------------------------------------------------------------


def read_gt_json(path, width: int, height: int) -> SegmentSet:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EvalFormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, list):
        raise EvalFormatError(f"{path}: expected a JSON array of segments")
    segs = []
    for i, obj in enumerate(data):
        try:
            segs.append(LineSegment.from_coords(obj["x1"], obj["y1"], obj["x2"], obj["y2"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise EvalFormatError(f"{path}: segment {i}: {exc}") from None
    return SegmentSet.clamped(segs, width, height, source=path)


DET_HEADER = ("rank", "x1", "y1", "x2", "y2", "score")


def read_detections_csv(path, width: int, height: int) -> SegmentSet:
    path = os.fspath(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DET_HEADER:
            raise EvalFormatError(f"{path}:1: expected header {','.join(DET_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise EvalFormatError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                rank = int(row[0])
                vals = [float(v) for v in row[1:]]
                seg = LineSegment.from_coords(*vals[:4])
            except ValueError as exc:
                raise EvalFormatError(f"{path}:{lineno}: {exc}") from None
            rows.append((rank, seg, vals[4]))
    ranks = [r[0] for r in rows]
    if ranks != sorted(ranks):
        raise EvalFormatError(f"{path}: rows are not sorted by rank")
    return SegmentSet.clamped([r[1] for r in rows], width, height, [r[2] for r in rows], source=path)


@contextlib.contextmanager
def _out(target):
    """Open ``target`` for writing unless it is already a text stream."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            yield fh


def write_detections_csv(path, segments, scores):
    with _out(path) as fh:
        fh.write(",".join(DET_HEADER) + "\n")
        for rank, (s, sc) in enumerate(zip(segments, scores), start=1):
            x1, y1, x2, y2 = s.as_tuple()
            fh.write(f"{rank},{x1:.4f},{y1:.4f},{x2:.4f},{y2:.4f},{sc!r}\n")


def write_curves_csv(path, curve):
    with _out(path) as fh:
        fh.write("k,recall,precision,total_length\n")
        for p in curve:
            fh.write(f"{p.k},{p.recall:.6f},{p.precision:.6f},{p.total_length:.4f}\n")
