"""Logistic re-ranker combining mean ON marginal with an appearance cue."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

L2 = 1e-4
ITERATIONS = 500
STEP = 0.1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass(frozen=True)
class LogisticRanker:
    w0: float = 0.0
    w1: float = 0.0
    w2: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(w) for w in (self.w0, self.w1, self.w2)):
            raise ValueError("ranker coefficients must be finite")

    def score(self, mean_marginal: float, appearance: float) -> float:
        return float(_sigmoid(self.w0 + self.w1 * mean_marginal + self.w2 * appearance))


def rank2_score(ranker: LogisticRanker, mean_marginal: float, appearance: float) -> float:
    return ranker.score(mean_marginal, appearance)


def loss_and_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray, l2: float = L2):
    """Mean cross-entropy with soft targets plus (l2/2)|w[1:]|^2.

    ``x`` includes a leading column of ones; the bias is not penalised.
    """
    z = x @ w
    # log(1 + exp(z)) evaluated stably
    softplus = np.logaddexp(0.0, z)
    loss = float(np.mean(softplus - y * z)) + 0.5 * l2 * float(w[1:] @ w[1:])
    grad = x.T @ (_sigmoid(z) - y) / len(y)
    grad[1:] += l2 * w[1:]
    return loss, grad


def fit_logistic(features, targets, iterations: int = ITERATIONS, step: float = STEP, l2: float = L2):
    """Gradient descent on standardised features.

    Returns (LogisticRanker in raw feature units, per-iteration losses).
    """
    f = np.asarray(features, dtype=np.float64).reshape(-1, 2)
    y = np.asarray(targets, dtype=np.float64)
    if len(f) < 2 or len(y) != len(f):
        raise ValueError("need at least two (feature, target) pairs")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("targets must lie in [0, 1]")
    mu, sd = f.mean(axis=0), f.std(axis=0)
    live = sd > 1e-12
    cols = np.flatnonzero(live)
    x = np.ones((len(f), 1 + len(cols)))
    x[:, 1:] = (f[:, cols] - mu[cols]) / sd[cols]
    w = np.zeros(x.shape[1])
    losses = []
    for _ in range(iterations):
        loss, g = loss_and_grad(w, x, y, l2)
        losses.append(loss)
        w -= step * g
    losses.append(loss_and_grad(w, x, y, l2)[0])
    raw = np.zeros(2)
    raw[cols] = w[1:] / sd[cols]
    w0 = w[0] - float(raw[cols] @ mu[cols])
    return LogisticRanker(float(w0), float(raw[0]), float(raw[1])), losses


def train_rank2(features, targets) -> LogisticRanker:
    return fit_logistic(features, targets)[0]
