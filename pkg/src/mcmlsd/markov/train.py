"""Estimating the observation and transition models from labelled lines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Line, LineSegment
from ..edges import EdgeMap
from .chain import EmptySequenceError, build_observation_sequence
from .model import (
    ANG_SUPPORT,
    DEFAULT_ANG_BIN_EDGES,
    DEFAULT_D_BIN_EDGES,
    HIST_FLOOR,
    PRIOR_FLOOR,
    LikelihoodModel,
    TransitionModel,
)

SIGMA_FLOOR = 0.05
EM_ITERATIONS = 200


class TrainingError(ValueError):
    pass


@dataclass
class LabeledLine:
    """A ground-truth line with the arc-length intervals where it is ON."""

    line: Line
    on_extents: list[tuple[float, float]] = field(default_factory=list)


def labeled_lines_from_segments(segments, rho_tol: float = 1.0, theta_tol: float = 1.0) -> list[LabeledLine]:
    """Group ground-truth segments by supporting line; collinear segments
    share one labelled line with several ON extents."""
    groups: list[LabeledLine] = []
    for seg in segments:
        l = seg.line
        for g in groups:
            dt = abs(g.line.theta - l.theta)
            same = dt <= theta_tol and abs(g.line.rho - l.rho) <= rho_tol
            seam = 180.0 - dt <= theta_tol and abs(g.line.rho + l.rho) <= rho_tol
            if same or seam:
                break
        else:
            g = LabeledLine(l)
            groups.append(g)
        dx, dy = g.line.direction
        t1 = seg.p1.x * dx + seg.p1.y * dy
        t2 = seg.p2.x * dx + seg.p2.y * dy
        g.on_extents.append((min(t1, t2), max(t1, t2)))
    return groups


def _labelled_sequences(labeled, halfwidth):
    """Yield (sequence, ON flags) for every labelled line in the corpus."""
    for em, lines in labeled:
        for ll in lines:
            if isinstance(ll, LineSegment):
                ll = labeled_lines_from_segments([ll])[0]
            try:
                seq = build_observation_sequence(ll.line, em, em.width, em.height, halfwidth)
            except EmptySequenceError:
                continue
            on = np.zeros(len(seq), dtype=bool)
            for t0, t1 in ll.on_extents:
                on |= (seq.t >= t0) & (seq.t <= t1)
            yield seq, on


def _floored(p: np.ndarray) -> np.ndarray:
    return np.clip(p, HIST_FLOOR, 1.0 - HIST_FLOOR)


def fit_uniform_halfnormal(theta, iterations: int = EM_ITERATIONS) -> tuple[float, float]:
    """EM for a mixture of U(0, 90) and a half-normal; returns (w_uniform, sigma)."""
    theta = np.asarray(theta, dtype=np.float64)
    if not len(theta):
        return 1.0, 2.0
    w_g = 0.5
    sigma = max(math.sqrt(float(np.mean(theta**2))) / 2, SIGMA_FLOOR)
    for _ in range(iterations):
        g = w_g * 2.0 / (sigma * math.sqrt(2 * math.pi)) * np.exp(-0.5 * (theta / sigma) ** 2)
        u = (1.0 - w_g) / ANG_SUPPORT
        r = g / (g + u)
        new_w = float(r.mean())
        new_sigma = max(math.sqrt(float(r @ theta**2) / max(float(r.sum()), 1e-300)), SIGMA_FLOOR)
        done = abs(new_w - w_g) < 1e-10 and abs(new_sigma - sigma) < 1e-10
        w_g, sigma = new_w, new_sigma
        if done:
            break
    return 1.0 - w_g, sigma


def train_likelihoods(labeled, halfwidth: float = 2.0) -> LikelihoodModel:
    """Histogram and mixture estimates from ``labeled``: an iterable of
    (EdgeMap, list of LabeledLine or LineSegment)."""
    d_edges = np.asarray(DEFAULT_D_BIN_EDGES)
    a_edges = np.asarray(DEFAULT_ANG_BIN_EDGES)
    nd = len(d_edges) - 1
    counts = np.zeros((2, nd))
    edge_counts = np.zeros((2, nd))
    ang_on, ang_off = [], []
    seen_lines = 0
    for seq, on in _labelled_sequences(labeled, halfwidth):
        seen_lines += 1
        k = np.clip(np.searchsorted(d_edges, seq.d, side="right") - 1, 0, nd - 1)
        for state, mask in ((0, ~on), (1, on)):
            counts[state] += np.bincount(k[mask], minlength=nd)
            edge_counts[state] += np.bincount(k[mask & seq.has_edge], minlength=nd)
        ang_on.append(seq.theta_dev[on & seq.has_edge])
        ang_off.append(seq.theta_dev[~on & seq.has_edge])
    if seen_lines == 0:
        raise TrainingError("no samples observed for state ON: no labelled line produced any samples")
    for state, name in ((1, "ON"), (0, "OFF")):
        if counts[state].sum() == 0:
            raise TrainingError(f"no samples observed for state {name}")
    with np.errstate(invalid="ignore", divide="ignore"):
        p_on = np.where(counts[1] > 0, edge_counts[1] / counts[1], HIST_FLOOR)
        p_off = np.where(counts[0] > 0, edge_counts[0] / counts[0], HIST_FLOOR)
    off_theta = np.concatenate(ang_off) if ang_off else np.zeros(0)
    hist = np.histogram(np.clip(off_theta, 0, ANG_SUPPORT), bins=a_edges)[0].astype(np.float64)
    hist = hist / hist.sum() if hist.sum() > 0 else np.full(len(hist), 1.0 / len(hist))
    hist = np.maximum(hist, HIST_FLOOR)
    hist /= hist.sum()
    w_uniform, sigma = fit_uniform_halfnormal(np.concatenate(ang_on) if ang_on else np.zeros(0))
    return LikelihoodModel(
        p_edge_on=tuple(float(v) for v in _floored(p_on)),
        p_edge_off=tuple(float(v) for v in _floored(p_off)),
        w_uniform=float(w_uniform),
        sigma_deg=float(sigma),
        ang_off=tuple(float(v) for v in hist),
        d_bin_edges=tuple(float(v) for v in d_edges),
        ang_bin_edges=tuple(float(v) for v in a_edges),
    )


def count_priors(sequences) -> TransitionModel:
    """Maximum-likelihood chain parameters from boolean ON label sequences."""
    n = n_on = from_off = from_on = off_on = on_off = 0
    for on in sequences:
        on = np.asarray(on, dtype=bool)
        if not len(on):
            continue
        n += len(on)
        n_on += int(on.sum())
        prev, nxt = on[:-1], on[1:]
        from_off += int((~prev).sum())
        from_on += int(prev.sum())
        off_on += int((~prev & nxt).sum())
        on_off += int((prev & ~nxt).sum())
    if n == 0:
        raise TrainingError("no labelled samples")

    def ratio(a, b):
        p = a / b if b else 0.0
        return min(max(p, PRIOR_FLOOR), 1.0 - PRIOR_FLOOR)

    return TransitionModel(ratio(n_on, n), ratio(off_on, from_off), ratio(on_off, from_on))


def train_priors(labeled, halfwidth: float = 2.0) -> TransitionModel:
    return count_priors(on for _, on in _labelled_sequences(labeled, halfwidth))
