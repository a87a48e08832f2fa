"""Flat ``key = value`` run configuration.

Lines starting with ``#`` (and anything after an inline ``#``) are
comments.  Unknown keys are rejected; values are validated by the objects
they configure.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from .edges import EdgeDetectParams
from .evaluation import MODES
from .hough import HoughParams
from .markov.segments import METHODS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # edge detection
    edge_sigma: float = 1.0
    high_threshold: float = 8.0
    low_threshold: float = 4.0
    # hough
    delta_rho: float = 0.4
    delta_theta: float = 0.46
    sigma_pos: float = 0.5
    sigma_theta: float = 3.0
    max_lines: int = 500
    min_peak: float = 0.5
    support_radius: float = 3.0
    refit: bool = True
    # segment labelling and ranking
    halfwidth: float = 2.0
    removal_radius: float = 2.0
    min_extent: float = 2.0
    method: str = "4"
    model: str = ""
    confidence: str = ""
    resolution_scale: float = 0.0
    # evaluation
    threshold: float = 0.0
    mode: str = "segment"
    k_grid: str = "10:500:10"

    def validate(self) -> "Config":
        try:
            self.edge_params()
            self.hough_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        for name in ("halfwidth", "removal_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.min_extent < 0 or self.threshold < 0 or self.resolution_scale < 0:
            raise ConfigError("min_extent, threshold and resolution_scale must be non-negative")
        self.k_values()
        return self

    def edge_params(self) -> EdgeDetectParams:
        return EdgeDetectParams(self.edge_sigma, self.high_threshold, self.low_threshold)

    def hough_params(self) -> HoughParams:
        return HoughParams(
            self.delta_rho, self.delta_theta, self.sigma_pos, self.sigma_theta,
            self.max_lines, self.min_peak, self.support_radius, self.refit,
        )

    def k_values(self) -> list[int]:
        text = self.k_grid.strip()
        try:
            if ":" in text:
                lo, hi, step = (int(v) for v in text.split(":"))
                ks = list(range(lo, hi + 1, step))
            else:
                ks = [int(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad k_grid {self.k_grid!r}; use lo:hi:step or a comma list") from None
        if not ks or ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"k_grid {self.k_grid!r} must be ascending positive integers")
        return ks

    def eval_threshold(self, width: int, height: int) -> float:
        if self.threshold > 0:
            return self.threshold
        if self.mode == "pixel":
            return 0.01 * math.hypot(width, height)
        return 2 * math.sqrt(2)

    def with_values(self, values: dict) -> "Config":
        return replace(self, **coerce(values)).validate()


_TYPES = {f.name: f.type for f in fields(Config)}


def coerce(values: dict) -> dict:
    out = {}
    for key, raw in values.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        kind = _TYPES[key]
        try:
            if kind == "bool":
                out[key] = _parse_bool(raw)
            elif kind == "int":
                out[key] = int(raw)
            elif kind == "float":
                out[key] = float(raw)
            else:
                out[key] = str(raw)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return out


def _parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key = key.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Defaults, then the file at ``path``, then ``overrides``."""
    values = {}
    if path:
        path = os.fspath(path)
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return Config().with_values(values)
