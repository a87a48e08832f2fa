"""Observation and transition models of the ON/OFF segment chain, plus the
JSON model file."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

HIST_FLOOR = 1e-4
PRIOR_FLOOR = 1e-6
ANG_SUPPORT = 90.0

DEFAULT_D_BIN_EDGES = (0.0, 0.5, 1.0, 1.5, 2.0)
DEFAULT_ANG_BIN_EDGES = tuple(float(a) for a in range(0, 95, 5))


@dataclass(frozen=True)
class LikelihoodModel:
    """p(e=1 | state, d) histograms and p(theta | state, e=1) densities.

    ``ang_off`` holds bin probabilities (summing to one), converted to a
    density per degree on evaluation.
    """

    p_edge_on: tuple[float, ...]
    p_edge_off: tuple[float, ...]
    w_uniform: float
    sigma_deg: float
    ang_off: tuple[float, ...]
    d_bin_edges: tuple[float, ...] = DEFAULT_D_BIN_EDGES
    ang_bin_edges: tuple[float, ...] = DEFAULT_ANG_BIN_EDGES

    def __post_init__(self):
        nd = len(self.d_bin_edges) - 1
        if len(self.p_edge_on) != nd or len(self.p_edge_off) != nd:
            raise ValueError("edge histograms must have one entry per d bin")
        if len(self.ang_off) != len(self.ang_bin_edges) - 1:
            raise ValueError("ang_off must have one entry per angle bin")
        for v in self.p_edge_on + self.p_edge_off + self.ang_off:
            if not 0 < v < 1:
                raise ValueError(f"histogram entry {v} outside (0, 1)")
        if not 0 <= self.w_uniform <= 1:
            raise ValueError("w_uniform must lie in [0, 1]")
        if not self.sigma_deg > 0:
            raise ValueError("sigma_deg must be positive")
        if abs(sum(self.ang_off) - 1.0) > 1e-9:
            raise ValueError("ang_off bins must sum to 1")

    @property
    def w_gauss(self) -> float:
        return 1.0 - self.w_uniform

    def d_bin(self, d):
        edges = np.asarray(self.d_bin_edges)
        return np.clip(np.searchsorted(edges, d, side="right") - 1, 0, len(edges) - 2)

    def ang_on_density(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        s = self.sigma_deg
        half_normal = 2.0 / (s * math.sqrt(2 * math.pi)) * np.exp(-0.5 * (theta / s) ** 2)
        return self.w_uniform / ANG_SUPPORT + self.w_gauss * half_normal

    def ang_off_density(self, theta):
        edges = np.asarray(self.ang_bin_edges)
        k = np.clip(np.searchsorted(edges, theta, side="right") - 1, 0, len(edges) - 2)
        return np.asarray(self.ang_off)[k] / np.diff(edges)[k]


@dataclass(frozen=True)
class TransitionModel:
    p_on: float = 0.25
    p_on_given_off: float = 0.0014
    p_off_given_on: float = 0.0051

    def __post_init__(self):
        for name in ("p_on", "p_on_given_off", "p_off_given_on"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name}={v} outside (0, 1)")

    @property
    def p_off(self) -> float:
        return 1.0 - self.p_on

    def log_params(self):
        """(log p_off, log p_on, log p(OFF|OFF), log p(ON|OFF), log p(OFF|ON), log p(ON|ON))."""
        return (
            math.log(self.p_off),
            math.log(self.p_on),
            math.log1p(-self.p_on_given_off),
            math.log(self.p_on_given_off),
            math.log(self.p_off_given_on),
            math.log1p(-self.p_off_given_on),
        )


TABLE1_TRANSITIONS = TransitionModel(0.25, 0.0014, 0.0051)


def scale_transition_model(tm: TransitionModel, resolution_factor: float) -> TransitionModel:
    """Rescale state-change probabilities for a resolution ``factor`` times the
    reference; the ON/OFF marginals are resolution invariant."""
    if not resolution_factor > 0:
        raise ValueError("resolution factor must be positive")
    on_off = tm.p_on_given_off / resolution_factor
    off_on = tm.p_off_given_on / resolution_factor
    if on_off >= 0.5 or off_on >= 0.5:
        raise ValueError(f"scaling by {resolution_factor} gives a transition probability >= 0.5")
    return replace(tm, p_on_given_off=on_off, p_off_given_on=off_on)


def default_likelihoods() -> LikelihoodModel:
    n_ang = len(DEFAULT_ANG_BIN_EDGES) - 1
    return LikelihoodModel(
        p_edge_on=(0.6, 0.45, 0.25, 0.12),
        p_edge_off=(0.05, 0.05, 0.05, 0.05),
        w_uniform=0.15,
        sigma_deg=2.0,
        ang_off=tuple([1.0 / n_ang] * n_ang),
    )


@dataclass
class ModelBundle:
    likelihoods: LikelihoodModel
    transitions: TransitionModel
    resolution_ref: tuple[int, int] = (640, 480)
    ranker: object | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        lm, tm = self.likelihoods, self.transitions
        out = {
            "p_edge_on": list(lm.p_edge_on),
            "p_edge_off": list(lm.p_edge_off),
            "d_bin_edges": list(lm.d_bin_edges),
            "ang_on": {"w_uniform": lm.w_uniform, "sigma_deg": lm.sigma_deg},
            "ang_off": list(lm.ang_off),
            "ang_bin_edges": list(lm.ang_bin_edges),
            "transitions": {
                "p_on": tm.p_on,
                "p_on_given_off": tm.p_on_given_off,
                "p_off_given_on": tm.p_off_given_on,
            },
            "resolution_ref": list(self.resolution_ref),
        }
        if self.ranker is not None:
            out["rank2"] = {"w0": self.ranker.w0, "w1": self.ranker.w1, "w2": self.ranker.w2}
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def for_image(self, width: int, height: int, resolution_scale: float | None = None) -> "ModelBundle":
        """Copy with transitions rescaled to an image of the given size.

        ``resolution_scale`` overrides the factor derived from the ratio of
        image diagonals.
        """
        if resolution_scale is None:
            rw, rh = self.resolution_ref
            resolution_scale = math.hypot(width, height) / math.hypot(rw, rh)
        if resolution_scale == 1.0:
            return self
        return replace(self, transitions=scale_transition_model(self.transitions, resolution_scale))


def model_from_json(obj: dict) -> ModelBundle:
    from .ranker import LogisticRanker

    try:
        lm = LikelihoodModel(
            p_edge_on=tuple(float(v) for v in obj["p_edge_on"]),
            p_edge_off=tuple(float(v) for v in obj["p_edge_off"]),
            w_uniform=float(obj["ang_on"]["w_uniform"]),
            sigma_deg=float(obj["ang_on"]["sigma_deg"]),
            ang_off=tuple(float(v) for v in obj["ang_off"]),
            d_bin_edges=tuple(float(v) for v in obj["d_bin_edges"]),
            ang_bin_edges=tuple(float(v) for v in obj["ang_bin_edges"]),
        )
        tr = obj["transitions"]
        tm = TransitionModel(float(tr["p_on"]), float(tr["p_on_given_off"]), float(tr["p_off_given_on"]))
        ref = tuple(int(v) for v in obj["resolution_ref"])
    except KeyError as exc:
        raise ValueError(f"model file missing field {exc.args[0]!r}") from None
    ranker = None
    if "rank2" in obj:
        r = obj["rank2"]
        ranker = LogisticRanker(float(r["w0"]), float(r["w1"]), float(r["w2"]))
    return ModelBundle(lm, tm, ref, ranker)


def load_model(path=None) -> ModelBundle:
    """Load a model file; ``None`` loads the packaged default model."""
    if path is None:
        text = resources.files("mcmlsd.data").joinpath("default_model.json").read_text(encoding="utf-8")
    else:
        with open(os.fspath(path), encoding="utf-8") as fh:
            text = fh.read()
    return model_from_json(json.loads(text))


def default_model() -> ModelBundle:
    return load_model(None)
