import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mcmlsd.markov.model import LikelihoodModel, TransitionModel  # noqa: E402


def random_models(rng):
    """A random but valid (LikelihoodModel, TransitionModel) pair."""
    nd = 4
    n_ang = 18
    ang_off = rng.dirichlet(np.ones(n_ang))
    ang_off = np.maximum(ang_off, 1e-3)
    ang_off /= ang_off.sum()
    lm = LikelihoodModel(
        p_edge_on=tuple(rng.uniform(0.05, 0.95, nd)),
        p_edge_off=tuple(rng.uniform(0.05, 0.95, nd)),
        w_uniform=float(rng.uniform(0.05, 0.95)),
        sigma_deg=float(rng.uniform(1.0, 20.0)),
        ang_off=tuple(float(v) for v in ang_off),
    )
    tm = TransitionModel(
        float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.01, 0.6)), float(rng.uniform(0.01, 0.6))
    )
    return lm, tm


def random_sequence(rng, n, line=None):
    from mcmlsd.core import Line
    from mcmlsd.markov.chain import LineObservationSequence

    has = rng.random(n) < 0.5
    dev = np.where(has, rng.uniform(0, 90, n), np.nan)
    return LineObservationSequence(
        line or Line(0.0, 0.0), np.arange(n, dtype=float), rng.uniform(0, 2, n), has, dev
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def sqrt2():
    return math.sqrt(2)
