"""Synthetic test scenes: anti-aliased dark segments on a grey background."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import LineSegment, points_to_segment_distance

BACKGROUND = 128.0
CONTRAST = 100.0
LINE_WIDTH = 1.0


@dataclass
class SceneSpec:
    width: int
    height: int
    segments: list[LineSegment]
    noise_sigma: float = 0.0
    line_width: float = LINE_WIDTH

    def validate(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be non-negative")
        for i, s in enumerate(self.segments):
            for p in (s.p1, s.p2):
                if not (0 <= p.x <= self.width - 1 and 0 <= p.y <= self.height - 1):
                    raise ValueError(f"segment {i} endpoint ({p.x}, {p.y}) outside the image")

    @classmethod
    def from_json(cls, obj: dict) -> "SceneSpec":
        segs = [LineSegment.from_coords(s["x1"], s["y1"], s["x2"], s["y2"]) for s in obj.get("segments", [])]
        return cls(
            int(obj["width"]),
            int(obj["height"]),
            segs,
            float(obj.get("noise_sigma", 0.0)),
            float(obj.get("line_width", LINE_WIDTH)),
        )


def coverage(dist: np.ndarray, line_width: float) -> np.ndarray:
    """Box-filtered ink coverage of a pixel at distance ``dist`` from the
    centreline of a stroke of the given width."""
    return np.clip(line_width / 2 + 0.5 - dist, 0.0, 1.0) * min(line_width, 1.0)


def render_scene(spec: SceneSpec, seed: int) -> np.ndarray:
    """Render ``spec`` to a (height, width) float image in [0, 255]."""
    spec.validate()
    h, w = spec.height, spec.width
    ink = np.zeros((h, w))
    reach = spec.line_width / 2 + 1.0
    for s in spec.segments:
        x0 = max(int(math.floor(min(s.p1.x, s.p2.x) - reach)), 0)
        x1 = min(int(math.ceil(max(s.p1.x, s.p2.x) + reach)), w - 1)
        y0 = max(int(math.floor(min(s.p1.y, s.p2.y) - reach)), 0)
        y1 = min(int(math.ceil(max(s.p1.y, s.p2.y) + reach)), h - 1)
        yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        pts = np.column_stack([xx.ravel(), yy.ravel()]).astype(np.float64)
        cov = coverage(points_to_segment_distance(pts, s), spec.line_width).reshape(yy.shape)
        # overlapping strokes do not darken beyond full coverage
        np.maximum(ink[y0 : y1 + 1, x0 : x1 + 1], cov, out=ink[y0 : y1 + 1, x0 : x1 + 1])
    img = BACKGROUND - CONTRAST * ink
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        img = img + rng.normal(0.0, spec.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 255.0)


def random_segments(
    rng: np.random.Generator,
    n: int,
    width: int,
    height: int,
    min_length: float = 60.0,
    max_length: float = 250.0,
    margin: float = 10.0,
) -> list[LineSegment]:
    segs = []
    while len(segs) < n:
        length = rng.uniform(min_length, max_length)
        ang = rng.uniform(0, math.pi)
        cx = rng.uniform(margin, width - 1 - margin)
        cy = rng.uniform(margin, height - 1 - margin)
        dx, dy = 0.5 * length * math.cos(ang), 0.5 * length * math.sin(ang)
        x1, y1, x2, y2 = cx - dx, cy - dy, cx + dx, cy + dy
        if min(x1, x2) < margin or max(x1, x2) > width - 1 - margin:
            continue
        if min(y1, y2) < margin or max(y1, y2) > height - 1 - margin:
            continue
        segs.append(LineSegment.from_coords(x1, y1, x2, y2))
    return segs


def random_scene(seed: int, n_segments: int = 8, width: int = 640, height: int = 480,
                 noise_sigma: float = 5.0, min_length: float = 60.0) -> tuple[SceneSpec, np.ndarray]:
    """Seeded random scene and its rendering."""
    rng = np.random.default_rng(seed)
    spec = SceneSpec(width, height, random_segments(rng, n_segments, width, height, min_length), noise_sigma)
    return spec, render_scene(spec, seed)


def write_gt_json(path, segments):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([dict(zip(("x1", "y1", "x2", "y2"), s.as_tuple())) for s in segments], fh, indent=1)
        fh.write("\n")
