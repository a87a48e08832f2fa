"""The full detector: Hough lines, per-line MAP segments, ranking."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..edges import EdgeMap
from ..hough import HoughParams, accumulate, extract_next_line
from .chain import EmptySequenceError, build_observation_sequence, emission_logs, viterbi_logs
from .model import ModelBundle, default_model
from .ranker import LogisticRanker
from .segments import METHODS, MIN_EXTENT, RankedSegment, appearance_score, run_scores, split_runs

log = logging.getLogger(__name__)


@dataclass
class DetectorConfig:
    hough: HoughParams = field(default_factory=HoughParams)
    model: ModelBundle | None = None
    halfwidth: float = 2.0
    removal_radius: float = 2.0
    min_extent: float = MIN_EXTENT
    method: str = "4"
    ranker: LogisticRanker | None = None
    confidence: np.ndarray | None = None

    def __post_init__(self):
        self.method = str(self.method)
        if self.method not in METHODS:
            raise ValueError(f"unknown ranking method {self.method!r}")
        if self.halfwidth <= 0 or self.removal_radius <= 0:
            raise ValueError("band widths must be positive")


@dataclass
class DetectionStats:
    lines: int = 0
    segments: int = 0
    discarded_runs: int = 0


def run_mcmlsd(em: EdgeMap, width: int, height: int, config: DetectorConfig | None = None, stats=None):
    """Detect and rank segments; returns RankedSegments by descending score.

    Each detected line is searched in the current working edge map, and the
    edges of every segment found are removed before the next line.
    """
    cfg = config or DetectorConfig()
    model = cfg.model or default_model().for_image(width, height)
    lm, tm = model.likelihoods, model.transitions
    ranker = cfg.ranker if cfg.ranker is not None else model.ranker
    use_rank2 = cfg.method == "mcmlsd2" or (ranker is not None and cfg.confidence is not None)
    if use_rank2 and (ranker is None or cfg.confidence is None):
        raise ValueError("MCMLSD2 ranking needs both a trained ranker and a confidence grid")
    stats = stats if stats is not None else DetectionStats()
    if (em.width, em.height) != (width, height):
        raise ValueError("edge map dimensions differ from the image dimensions")

    # when every edge-free sample and every transition favours OFF, the MAP
    # labelling of an edge-free line is all OFF and the DP can be skipped
    edge_free_is_off = (
        all(a >= b for a, b in zip(lm.p_edge_on, lm.p_edge_off))
        and tm.p_on <= tm.p_off
        and tm.p_off_given_on >= tm.p_on_given_off
    )
    hm = accumulate(em, cfg.hough)
    work = em
    found = []
    while stats.lines < cfg.hough.max_lines:
        dl = extract_next_line(hm, em, cfg.hough)
        if dl is None:
            break
        stats.lines += 1
        try:
            seq = build_observation_sequence(dl.line, work, width, height, cfg.halfwidth)
        except EmptySequenceError:
            continue
        if edge_free_is_off and not seq.has_edge.any():
            continue
        logs = emission_logs(seq, lm)
        ss = viterbi_logs(logs, tm)
        kept, dropped = split_runs(ss, seq, cfg.min_extent)
        stats.discarded_runs += len(dropped)
        if not kept:
            continue
        drop = np.zeros(len(work), dtype=bool)
        for seg, run in kept:
            scores = run_scores(logs, run, tm)
            appearance = np.nan
            if use_rank2:
                appearance = appearance_score(cfg.confidence, seg, work, cfg.removal_radius)
                score = ranker.score(scores["mean_marginal"], appearance)
                method = "mcmlsd2"
            else:
                score, method = scores[cfg.method], cfg.method
            found.append(
                RankedSegment(seg, float(score), method, run, stats.lines - 1, scores["mean_marginal"], appearance)
            )
            drop[work.near_segment_indices(seg, cfg.removal_radius)] = True
        stats.segments += len(kept)
        if drop.any():
            work = work.subset(~drop)
    log.debug("%d lines, %d segments", stats.lines, stats.segments)
    # stable sort keeps extraction order among equal scores
    order = sorted(range(len(found)), key=lambda i: -found[i].score)
    return [found[i] for i in order]
