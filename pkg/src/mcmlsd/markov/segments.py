"""Segment extraction from MAP labellings and probabilistic ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import LineSegment
from ..edges import EdgeMap
from .chain import (
    LineObservationSequence,
    StateSequence,
    emission_logs,
    forward_logs,
    marginals_logs,
)
from .model import LikelihoodModel, TransitionModel

METHODS = ("1", "2", "3", "4", "mcmlsd2")
MIN_EXTENT = 2.0


@dataclass(frozen=True)
class RankedSegment:
    segment: LineSegment
    score: float
    method: str
    run: tuple[int, int]
    line_index: int = -1
    mean_marginal: float = math.nan
    appearance: float = math.nan


def on_runs(states) -> list[tuple[int, int]]:
    """Maximal ON runs as (start index, M) with the run covering start..start+M."""
    s = np.frombuffer(bytes(states), dtype=np.uint8) if not isinstance(states, np.ndarray) else states
    if not len(s):
        return []
    padded = np.concatenate([[0], s.astype(np.int8), [0]])
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    stops = np.flatnonzero(diff == -1) - 1
    return [(int(a), int(b - a)) for a, b in zip(starts, stops)]


def split_runs(ss: StateSequence, seq: LineObservationSequence, min_extent: float = MIN_EXTENT):
    """Return (kept, discarded): kept holds (LineSegment, run) pairs."""
    if len(ss) != len(seq):
        raise ValueError("state and observation sequences differ in length")
    kept, dropped = [], []
    for start, m in on_runs(ss.states):
        t0, t1 = float(seq.t[start]), float(seq.t[start + m])
        if t1 - t0 < min_extent:
            dropped.append((start, m))
            continue
        kept.append((LineSegment(seq.line.point_at(t0), seq.line.point_at(t1)), (start, m)))
    return kept, dropped


def extract_segments(ss: StateSequence, seq: LineObservationSequence, min_extent: float = MIN_EXTENT):
    return split_runs(ss, seq, min_extent)[0]


def run_scores(em_logs: np.ndarray, run: tuple[int, int], tm: TransitionModel) -> dict:
    """All four ranking scores for one run, from the full-line emission logs.

    The run is treated as its own chain y_i..y_{i+M} started from the
    stationary prior.
    """
    start, m = run
    sub = em_logs[start : start + m + 1]
    l_off, l_on, a_oo, _, _, a_nn = tm.log_params()
    log_on = l_on + float(sub[:, 1].sum()) + m * a_nn
    log_off = l_off + float(sub[:, 0].sum()) + m * a_oo
    _, _, log_z = forward_logs(sub, tm)
    m1 = math.exp(min(log_on - log_z, 0.0))
    marg = marginals_logs(sub, tm)
    return {
        "1": m1,
        "2": m1 * m,
        "3": log_on - log_off,
        "4": float(marg.sum()),
        "mean_marginal": float(marg.mean()),
    }


def rank_segment(
    seq: LineObservationSequence, run, method, lm: LikelihoodModel, tm: TransitionModel
) -> float:
    method = str(method)
    if method not in ("1", "2", "3", "4"):
        raise ValueError(f"unknown ranking method {method!r}")
    start, m = run
    if start < 0 or m < 0 or start + m >= len(seq):
        raise ValueError("run outside the sequence")
    return run_scores(emission_logs(seq, lm), run, tm)[method]


def remove_segment_edges(em: EdgeMap, s: LineSegment, radius: float = 2.0) -> EdgeMap:
    drop = em.near_segment_indices(s, radius)
    if not len(drop):
        return em
    keep = np.ones(len(em), dtype=bool)
    keep[drop] = False
    return em.subset(keep)


def appearance_score(conf, s: LineSegment, em: EdgeMap, radius: float = 2.0) -> float:
    """Mean confidence at the edges associated with ``s``."""
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape != (em.height, em.width):
        raise ValueError(f"confidence grid {conf.shape} does not match image {em.height}x{em.width}")
    idx = em.near_segment_indices(s, radius)
    if not len(idx):
        return 0.0
    px = np.clip(np.rint(em.x[idx]).astype(np.int64), 0, em.width - 1)
    py = np.clip(np.rint(em.y[idx]).astype(np.int64), 0, em.height - 1)
    return float(conf[py, px].mean())
