"""Observation sequences along a line and exact inference on the two-state
ON/OFF chain (MAP labelling by dynamic programming, smoothing marginals).

The DP loops run over plain Python floats: for two states this is faster
than per-step numpy calls, and the emission terms are precomputed in bulk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Line, line_t_range
from ..edges import EdgeMap
from ..hough import angular_deviation
from .model import LikelihoodModel, TransitionModel

OFF, ON = 0, 1


class EmptySequenceError(ValueError):
    """The line has no in-band pixel inside the image."""


@dataclass(frozen=True)
class ObservationSample:
    t: float
    d: float
    has_edge: bool
    theta_dev: float | None


class LineObservationSequence:
    """Samples ordered by arc length ``t`` along ``line``.

    Stored column-wise; ``theta_dev`` is NaN where there is no edge and
    ``edge_index`` is -1 there.
    """

    def __init__(self, line: Line, t, d, has_edge, theta_dev, px=None, py=None, edge_index=None):
        self.line = line
        self.t = np.asarray(t, dtype=np.float64)
        self.d = np.asarray(d, dtype=np.float64)
        self.has_edge = np.asarray(has_edge, dtype=bool)
        self.theta_dev = np.asarray(theta_dev, dtype=np.float64)
        n = len(self.t)
        self.px = np.zeros(n, dtype=np.int64) if px is None else np.asarray(px)
        self.py = np.zeros(n, dtype=np.int64) if py is None else np.asarray(py)
        self.edge_index = np.full(n, -1, dtype=np.int64) if edge_index is None else np.asarray(edge_index)

    @classmethod
    def from_samples(cls, line: Line, samples) -> "LineObservationSequence":
        samples = list(samples)
        return cls(
            line,
            [s.t for s in samples],
            [s.d for s in samples],
            [s.has_edge for s in samples],
            [np.nan if s.theta_dev is None else s.theta_dev for s in samples],
        )

    def __len__(self) -> int:
        return len(self.t)

    @property
    def samples(self) -> list[ObservationSample]:
        return [
            ObservationSample(float(t), float(d), bool(e), float(a) if e else None)
            for t, d, e, a in zip(self.t, self.d, self.has_edge, self.theta_dev)
        ]

    def slice(self, start: int, stop: int) -> "LineObservationSequence":
        sl = slice(start, stop)
        return LineObservationSequence(
            self.line, self.t[sl], self.d[sl], self.has_edge[sl], self.theta_dev[sl],
            self.px[sl], self.py[sl], self.edge_index[sl],
        )


def build_observation_sequence(
    l: Line, em: EdgeMap, width: int, height: int, halfwidth: float = 2.0
) -> LineObservationSequence:
    """One sample per integer pixel centre within ``halfwidth`` of ``l``."""
    span = line_t_range(l, width, height)
    if span is None:
        raise EmptySequenceError(f"line {l} misses the {width}x{height} image")
    c, s = l.normal
    reach = int(math.ceil(halfwidth * math.sqrt(2))) + 1
    # enumerate along the axis the line is closest to, so each step covers
    # a short run of candidate pixels
    if abs(c) >= abs(s):
        ys = np.arange(height)
        base = np.rint((l.rho - ys * s) / c).astype(np.int64)
        off = np.arange(-reach, reach + 1)
        px = (base[:, None] + off).ravel()
        py = np.repeat(ys, len(off))
    else:
        xs = np.arange(width)
        base = np.rint((l.rho - xs * c) / s).astype(np.int64)
        off = np.arange(-reach, reach + 1)
        py = (base[:, None] + off).ravel()
        px = np.repeat(xs, len(off))
    ok = (px >= 0) & (px < width) & (py >= 0) & (py < height)
    px, py = px[ok], py[ok]
    d = np.abs(px * c + py * s - l.rho)
    t = -px * s + py * c
    ok = (d <= halfwidth) & (t >= span[0] - 1e-9) & (t <= span[1] + 1e-9)
    px, py, d, t = px[ok], py[ok], d[ok], t[ok]
    if not len(t):
        raise EmptySequenceError(f"line {l} has no in-band pixels")
    order = np.lexsort((px, py, d, t))
    px, py, d, t = px[order], py[order], d[order], t[order]
    edge_index = em.pixel_raster()[py, px]
    has_edge = edge_index >= 0
    theta_dev = np.full(len(t), np.nan)
    if has_edge.any():
        theta_dev[has_edge] = angular_deviation(em.theta[edge_index[has_edge]], l.theta)
    return LineObservationSequence(l, t, d, has_edge, theta_dev, px, py, edge_index)


def emission_logs(seq: LineObservationSequence, lm: LikelihoodModel) -> np.ndarray:
    """(N, 2) array of log p(y_i | x_i) for x_i = OFF, ON."""
    k = lm.d_bin(seq.d)
    pe = np.stack([np.asarray(lm.p_edge_off)[k], np.asarray(lm.p_edge_on)[k]], axis=1)
    out = np.log1p(-pe)
    e = seq.has_edge
    if e.any():
        a = seq.theta_dev[e]
        out[e, 0] = np.log(pe[e, 0]) + np.log(lm.ang_off_density(a))
        out[e, 1] = np.log(pe[e, 1]) + np.log(lm.ang_on_density(a))
    return out


def log_likelihood(s: ObservationSample, state: int, lm: LikelihoodModel) -> float:
    k = int(lm.d_bin(s.d))
    pe = (lm.p_edge_off if state == OFF else lm.p_edge_on)[k]
    if not s.has_edge:
        return math.log1p(-pe)
    dens = lm.ang_off_density(s.theta_dev) if state == OFF else lm.ang_on_density(s.theta_dev)
    return math.log(pe) + math.log(float(dens))


@dataclass(frozen=True)
class StateSequence:
    states: tuple[int, ...]
    log_prob: float

    def __len__(self) -> int:
        return len(self.states)


def viterbi_logs(em_logs: np.ndarray, tm: TransitionModel) -> StateSequence:
    """MAP labelling from precomputed (N, 2) emission logs. Ties go to OFF."""
    n = len(em_logs)
    if n == 0:
        raise EmptySequenceError("empty observation sequence")
    l_off, l_on, a_oo, a_on, a_no, a_nn = tm.log_params()
    # costs are negative log probabilities
    a_oo, a_on, a_no, a_nn = -a_oo, -a_on, -a_no, -a_nn
    e_off = (-em_logs[:, 0]).tolist()
    e_on = (-em_logs[:, 1]).tolist()
    c0 = e_off[0] - l_off
    c1 = e_on[0] - l_on
    back_off = bytearray(n)
    back_on = bytearray(n)
    for i in range(1, n):
        x, y = c0 + a_oo, c1 + a_no
        if x <= y:
            n0 = x
        else:
            n0 = y
            back_off[i] = 1
        x, y = c0 + a_on, c1 + a_nn
        if x <= y:
            n1 = x
        else:
            n1 = y
            back_on[i] = 1
        c0 = n0 + e_off[i]
        c1 = n1 + e_on[i]
    k = OFF if c0 <= c1 else ON
    best = min(c0, c1)
    states = bytearray(n)
    for i in range(n - 1, -1, -1):
        states[i] = k
        if i:
            k = back_on[i] if k else back_off[i]
    return StateSequence(tuple(states), -best)


def viterbi(seq: LineObservationSequence, lm: LikelihoodModel, tm: TransitionModel) -> StateSequence:
    return viterbi_logs(emission_logs(seq, lm), tm)


def _normalized_emissions(em_logs):
    shift = em_logs.max(axis=1)
    lik = np.exp(em_logs - shift[:, None])
    return lik[:, 0].tolist(), lik[:, 1].tolist(), float(shift.sum())


def forward_logs(em_logs: np.ndarray, tm: TransitionModel):
    """Scaled forward pass.  Returns (alpha_off, alpha_on, log evidence)
    with the alphas normalised per step."""
    n = len(em_logs)
    if n == 0:
        raise EmptySequenceError("empty observation sequence")
    q_on, q_off = tm.p_on_given_off, tm.p_off_given_on
    f_off, f_on, log_z = _normalized_emissions(em_logs)
    a0, a1 = tm.p_off * f_off[0], tm.p_on * f_on[0]
    z = a0 + a1
    a0, a1 = a0 / z, a1 / z
    log_z += math.log(z)
    alpha = [0.0] * n
    alpha_off = [0.0] * n
    alpha[0], alpha_off[0] = a1, a0
    for i in range(1, n):
        b0 = (a0 * (1 - q_on) + a1 * q_off) * f_off[i]
        b1 = (a0 * q_on + a1 * (1 - q_off)) * f_on[i]
        z = b0 + b1
        a0, a1 = b0 / z, b1 / z
        log_z += math.log(z)
        alpha[i], alpha_off[i] = a1, a0
    return alpha_off, alpha, log_z


def marginals_logs(em_logs: np.ndarray, tm: TransitionModel) -> np.ndarray:
    n = len(em_logs)
    alpha_off, alpha_on, _ = forward_logs(em_logs, tm)
    q_on, q_off = tm.p_on_given_off, tm.p_off_given_on
    f_off, f_on, _ = _normalized_emissions(em_logs)
    post = [0.0] * n
    post[-1] = alpha_on[-1]
    b0 = b1 = 0.5
    for i in range(n - 2, -1, -1):
        # beta_i(j) = sum_k p(k|j) p(y_{i+1}|k) beta_{i+1}(k), rescaled
        u0, u1 = f_off[i + 1] * b0, f_on[i + 1] * b1
        c0 = (1 - q_on) * u0 + q_on * u1
        c1 = q_off * u0 + (1 - q_off) * u1
        z = c0 + c1
        b0, b1 = c0 / z, c1 / z
        g0, g1 = alpha_off[i] * b0, alpha_on[i] * b1
        post[i] = g1 / (g0 + g1)
    return np.asarray(post)


def forward_backward(seq: LineObservationSequence, lm: LikelihoodModel, tm: TransitionModel) -> np.ndarray:
    """Posterior p(x_i = ON | y_1..y_N) for every sample."""
    return marginals_logs(emission_logs(seq, lm), tm)
