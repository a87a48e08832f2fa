"""Geometry primitives shared by the detector and the evaluator.

Conventions: pixel centres sit at integer coordinates, the origin is the
top-left corner and y grows downward.  A line is stored in normal form
``x cos(theta) + y sin(theta) = rho`` with theta in degrees, canonical range
[0, 180).  The unit direction of a line is ``(-sin(theta), cos(theta))`` and
arc-length coordinates ``t`` are measured from the foot of the perpendicular
from the origin.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


def normalize_line(rho: float, theta: float) -> tuple[float, float]:
    """Map (rho, theta) onto the canonical theta range [0, 180)."""
    turns = math.floor(theta / 180.0)
    theta = theta - 180.0 * turns
    if turns % 2:
        rho = -rho
    if theta >= 180.0:
        theta -= 180.0
        rho = -rho
    return rho, theta


@dataclass(frozen=True)
class Line:
    rho: float
    theta: float

    def __post_init__(self):
        rho, theta = normalize_line(self.rho, self.theta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "theta", theta)

    @property
    def normal(self) -> tuple[float, float]:
        # exact for axis-aligned lines so their chords land on pixel rows
        if self.theta == 0.0:
            return 1.0, 0.0
        if self.theta == 90.0:
            return 0.0, 1.0
        t = math.radians(self.theta)
        return math.cos(t), math.sin(t)

    @property
    def direction(self) -> tuple[float, float]:
        c, s = self.normal
        return -s, c

    def point_at(self, t: float) -> Point2:
        c, s = self.normal
        return Point2(self.rho * c - t * s, self.rho * s + t * c)

    @classmethod
    def through(cls, p1: Point2, p2: Point2) -> "Line":
        """Line through two distinct points."""
        dx, dy = p2.x - p1.x, p2.y - p1.y
        if dx == 0 and dy == 0:
            raise ValueError("coincident points do not define a line")
        # normal is the direction rotated by -90 degrees
        theta = math.degrees(math.atan2(-dx, dy))
        c, s = math.cos(math.radians(theta)), math.sin(math.radians(theta))
        return cls(p1.x * c + p1.y * s, theta)


@dataclass(frozen=True)
class LineSegment:
    p1: Point2
    p2: Point2

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("zero-length segment")

    @property
    def length(self) -> float:
        return math.hypot(self.p2.x - self.p1.x, self.p2.y - self.p1.y)

    @property
    def line(self) -> Line:
        return Line.through(self.p1, self.p2)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p1.x, self.p1.y, self.p2.x, self.p2.y)

    @classmethod
    def from_coords(cls, x1, y1, x2, y2) -> "LineSegment":
        return cls(Point2(float(x1), float(y1)), Point2(float(x2), float(y2)))


class GrayImage:
    """8-bit grayscale raster stored as a (height, width) float array."""

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.size == 0:
            raise ValueError("image must be a non-empty 2-D grid")
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def load(cls, path) -> "GrayImage":
        path = os.fspath(path)
        with open(path, "rb") as fh:
            head = fh.read(2)
        if head == b"P5":
            return cls(read_pgm(path))
        if head == b"\x89P":
            return cls(_read_png(path))
        raise ValueError(f"{path}: not a binary PGM (P5) or PNG file")

    def save(self, path):
        write_pgm(path, self.values)


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: unsupported PGM magic {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: bad dimensions {width}x{height}")
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    values = raster.reshape(height, width).astype(np.float64)
    if maxval != 255:
        values *= 255.0 / maxval
    return values


def write_pgm(path, values):
    values = np.clip(np.rint(np.asarray(values, dtype=np.float64)), 0, 255).astype(np.uint8)
    height, width = values.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(values.tobytes())


def _read_png(path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValueError("PNG input needs Pillow (pip install mcmlsd[png])") from exc
    with Image.open(path) as im:
        if im.mode not in ("L", "P", "1"):
            raise ValueError(f"{path}: expected a grayscale PNG, got mode {im.mode}")
        return np.asarray(im.convert("L"), dtype=np.float64)


def point_line_distance(p: Point2, l: Line) -> float:
    c, s = l.normal
    return abs(p.x * c + p.y * s - l.rho)


def project_onto_line(p: Point2, l: Line) -> float:
    """Signed arc-length coordinate of the orthogonal projection of ``p``."""
    dx, dy = l.direction
    return p.x * dx + p.y * dy


def signed_offset(p: Point2, l: Line) -> float:
    c, s = l.normal
    return p.x * c + p.y * s - l.rho


def point_from_line_coords(l: Line, t: float, offset: float) -> Point2:
    """Inverse of (project_onto_line, signed_offset)."""
    c, s = l.normal
    return Point2((l.rho + offset) * c - t * s, (l.rho + offset) * s + t * c)


def segment_sample_points(s: LineSegment, spacing: float = 1.0) -> list[Point2]:
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    return [Point2(float(x), float(y)) for x, y in sample_segment_array(s, spacing)]


def sample_segment_array(s: LineSegment, spacing: float = 1.0) -> np.ndarray:
    """Array form of :func:`segment_sample_points`, shape (n, 2)."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    length = s.length
    n = int(math.floor(length / spacing + 1e-9)) + 1
    steps = np.arange(n) * spacing / length
    x = s.p1.x + steps * (s.p2.x - s.p1.x)
    y = s.p1.y + steps * (s.p2.y - s.p1.y)
    return np.column_stack([x, y])


def line_t_range(l: Line, width: int, height: int) -> tuple[float, float] | None:
    """Parameter interval of ``l`` inside [0, width-1] x [0, height-1].

    Returns ``None`` when the line misses the rectangle or only touches it
    at a single point.
    """
    c, s = l.normal
    x0, y0 = l.rho * c, l.rho * s
    dx, dy = -s, c
    lo, hi = -math.inf, math.inf
    eps = 1e-12
    for origin, d, bound in ((x0, dx, width - 1), (y0, dy, height - 1)):
        if abs(d) < eps:
            if origin < -1e-9 or origin > bound + 1e-9:
                return None
            continue
        t1, t2 = (0.0 - origin) / d, (bound - origin) / d
        if t1 > t2:
            t1, t2 = t2, t1
        lo, hi = max(lo, t1), min(hi, t2)
    if hi - lo <= 1e-9:
        return None
    return lo, hi


def line_to_image_span(l: Line, width: int, height: int) -> LineSegment | None:
    """Maximal chord of ``l`` clipped to the image, or ``None`` if empty."""
    span = line_t_range(l, width, height)
    if span is None:
        return None
    p1, p2 = l.point_at(span[0]), l.point_at(span[1])
    return LineSegment(_clamp(p1, width, height), _clamp(p2, width, height))


def _clamp(p: Point2, width: int, height: int) -> Point2:
    # absorbs rounding drift only; the chord algebra is already exact
    return Point2(min(max(p.x, 0.0), width - 1.0), min(max(p.y, 0.0), height - 1.0))


def clamp_segment(s: LineSegment, width: int, height: int) -> LineSegment:
    return LineSegment(_clamp(s.p1, width, height), _clamp(s.p2, width, height))


def points_to_segment_distance(points: np.ndarray, s: LineSegment) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to segment ``s``."""
    a = np.array([s.p1.x, s.p1.y])
    d = np.array([s.p2.x - s.p1.x, s.p2.y - s.p1.y])
    u = np.clip(((points - a) @ d) / (d @ d), 0.0, 1.0)
    closest = a + u[:, None] * d
    return np.hypot(points[:, 0] - closest[:, 0], points[:, 1] - closest[:, 1])
