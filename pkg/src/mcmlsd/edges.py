"""Oriented edge evidence: a single-scale subpixel detector and CSV ingestion.

Edge orientation ``theta`` uses the same convention as :class:`Line`: an
edge with orientation theta lies tangent to a line of normal angle theta,
i.e. its tangent direction is ``(-sin(theta), cos(theta))``.  Numerically
this is the gradient angle folded into [0, 180), so a vertical step edge
has theta = 0.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import GrayImage, Line, LineSegment, Point2, line_t_range

CSV_HEADER = ("x", "y", "theta_deg", "strength")
GRID_CELL = 4


@dataclass(frozen=True)
class OrientedEdge:
    pos: Point2
    theta: float
    strength: float


@dataclass(frozen=True)
class EdgeDetectParams:
    sigma: float = 1.0
    high_threshold: float = 8.0
    low_threshold: float = 4.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.low_threshold <= self.high_threshold:
            raise ValueError("need 0 <= low_threshold <= high_threshold")


class EdgeMapError(ValueError):
    pass


class EdgeMap:
    """Immutable collection of oriented edges with spatial lookups.

    Edges are held column-wise in numpy arrays.  Two lazily built indices
    serve queries: a uniform grid of ``GRID_CELL`` pixel cells for band
    queries, and a per-pixel raster of the strongest edge in each pixel cell.
    """

    def __init__(self, x, y, theta, strength, width: int, height: int):
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.theta = np.mod(np.asarray(theta, dtype=np.float64), 180.0)
        self.strength = np.ascontiguousarray(strength, dtype=np.float64)
        self.width, self.height = int(width), int(height)
        n = len(self.x)
        if not (len(self.y) == len(self.theta) == len(self.strength) == n):
            raise EdgeMapError("edge arrays have inconsistent lengths")
        if self.width <= 0 or self.height <= 0:
            raise EdgeMapError("image dimensions must be positive")
        if n:
            if np.any(self.strength < 0):
                raise EdgeMapError("negative edge strength")
            bad = (self.x < 0) | (self.x > self.width - 1) | (self.y < 0) | (self.y > self.height - 1)
            if np.any(bad):
                i = int(np.flatnonzero(bad)[0])
                raise EdgeMapError(
                    f"edge {i} at ({self.x[i]}, {self.y[i]}) outside "
                    f"{self.width}x{self.height} image"
                )
        for a in (self.x, self.y, self.theta, self.strength):
            a.setflags(write=False)
        self._grid = None
        self._pixels = None

    @classmethod
    def empty(cls, width: int, height: int) -> "EdgeMap":
        z = np.zeros(0)
        return cls(z, z, z, z, width, height)

    @classmethod
    def from_edges(cls, edges, width: int, height: int) -> "EdgeMap":
        edges = list(edges)
        return cls(
            [e.pos.x for e in edges],
            [e.pos.y for e in edges],
            [e.theta for e in edges],
            [e.strength for e in edges],
            width,
            height,
        )

    def __len__(self) -> int:
        return len(self.x)

    def edge(self, i: int) -> OrientedEdge:
        return OrientedEdge(Point2(float(self.x[i]), float(self.y[i])), float(self.theta[i]), float(self.strength[i]))

    @property
    def edges(self) -> list[OrientedEdge]:
        return [self.edge(i) for i in range(len(self))]

    def subset(self, keep) -> "EdgeMap":
        keep = np.asarray(keep)
        return EdgeMap(self.x[keep], self.y[keep], self.theta[keep], self.strength[keep], self.width, self.height)

    # -- spatial indices ---------------------------------------------------

    def _grid_index(self):
        if self._grid is None:
            ncx = -(-self.width // GRID_CELL)
            ncy = -(-self.height // GRID_CELL)
            cx = np.minimum((self.x // GRID_CELL).astype(np.int64), ncx - 1)
            cy = np.minimum((self.y // GRID_CELL).astype(np.int64), ncy - 1)
            cell = cy * ncx + cx
            order = np.argsort(cell, kind="stable")
            starts = np.searchsorted(cell[order], np.arange(ncx * ncy + 1))
            self._grid = (ncx, ncy, order, starts)
        return self._grid

    def pixel_raster(self) -> np.ndarray:
        """(height, width) array holding the index of the strongest edge whose
        rounded position falls in each pixel, or -1."""
        if self._pixels is None:
            raster = np.full((self.height, self.width), -1, dtype=np.int64)
            if len(self):
                px = np.rint(self.x).astype(np.int64)
                py = np.rint(self.y).astype(np.int64)
                # ascending strength so the strongest edge writes last
                order = np.lexsort((-np.arange(len(self)), self.strength))
                raster[py[order], px[order]] = order
            self._pixels = raster
        return self._pixels

    def _band_candidates(self, l: Line, halfwidth: float) -> np.ndarray:
        ncx, ncy, order, starts = self._grid_index()
        c, s = l.normal
        # cell i holds positions in [i*GRID_CELL, (i+1)*GRID_CELL)
        centres_x = (np.arange(ncx) + 0.5) * GRID_CELL
        centres_y = (np.arange(ncy) + 0.5) * GRID_CELL
        dist = np.abs(centres_x[None, :] * c + centres_y[:, None] * s - l.rho)
        reach = halfwidth + GRID_CELL * math.sqrt(2) / 2 + 1e-6
        cells = np.flatnonzero(dist.ravel() <= reach)
        if not len(cells):
            return np.zeros(0, dtype=np.int64)
        lo, hi = starts[cells], starts[cells + 1]
        total = int((hi - lo).sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64)
        # concatenate order[lo:hi] for all selected cells without a Python loop
        lengths = hi - lo
        offsets = np.repeat(lo - np.cumsum(lengths) + lengths, lengths)
        return order[np.arange(total) + offsets]

    def near_line_indices(self, l: Line, halfwidth: float, t_range=None) -> np.ndarray:
        """Sorted indices of edges within ``halfwidth`` of ``l`` whose
        projection lies in ``t_range`` (default: the line's image chord)."""
        if halfwidth <= 0:
            raise ValueError("halfwidth must be positive")
        if not len(self):
            return np.zeros(0, dtype=np.int64)
        if t_range is None:
            t_range = line_t_range(l, self.width, self.height)
            if t_range is None:
                return np.zeros(0, dtype=np.int64)
        idx = self._band_candidates(l, halfwidth)
        c, s = l.normal
        x, y = self.x[idx], self.y[idx]
        d = np.abs(x * c + y * s - l.rho)
        t = -x * s + y * c
        ok = (d <= halfwidth) & (t >= t_range[0]) & (t <= t_range[1])
        return np.sort(idx[ok])

    def near_segment_indices(self, seg: LineSegment, halfwidth: float = 2.0) -> np.ndarray:
        l = seg.line
        dx, dy = l.direction
        t1 = seg.p1.x * dx + seg.p1.y * dy
        t2 = seg.p2.x * dx + seg.p2.y * dy
        return self.near_line_indices(l, halfwidth, (min(t1, t2), max(t1, t2)))


def edges_near_line(em: EdgeMap, l: Line, halfwidth: float) -> list[OrientedEdge]:
    return [em.edge(i) for i in em.near_line_indices(l, halfwidth)]


def detect_edges(img: GrayImage, params: EdgeDetectParams = EdgeDetectParams()) -> EdgeMap:
    """Derivative-of-Gaussian edges with NMS, parabolic subpixel refinement
    and hysteresis linking."""
    values = img.values
    h, w = values.shape
    sigma = params.sigma
    gx = ndimage.gaussian_filter(values, sigma, order=(0, 1), mode="nearest")
    gy = ndimage.gaussian_filter(values, sigma, order=(1, 0), mode="nearest")
    mag = np.hypot(gx, gy)

    margin = int(math.ceil(3 * sigma))
    inner = np.zeros((h, w), dtype=bool)
    if h > 2 * margin and w > 2 * margin:
        inner[margin : h - margin, margin : w - margin] = True
    cand = inner & (mag >= params.low_threshold) & (mag > 0)
    ys, xs = np.nonzero(cand)
    if not len(ys):
        return EdgeMap.empty(w, h)

    m0 = mag[ys, xs]
    ux, uy = gx[ys, xs] / m0, gy[ys, xs] / m0
    fwd = ndimage.map_coordinates(mag, [ys + uy, xs + ux], order=1, mode="nearest")
    bwd = ndimage.map_coordinates(mag, [ys - uy, xs - ux], order=1, mode="nearest")
    peak = (m0 > fwd) & (m0 >= bwd)

    ys, xs, m0, ux, uy, fwd, bwd = (a[peak] for a in (ys, xs, m0, ux, uy, fwd, bwd))
    nms = np.zeros((h, w), dtype=bool)
    nms[ys, xs] = True

    # hysteresis: keep 8-connected NMS chains containing a strong pixel
    labels, _ = ndimage.label(nms, structure=np.ones((3, 3), dtype=bool))
    strong = np.unique(labels[ys[m0 >= params.high_threshold], xs[m0 >= params.high_threshold]])
    keep = np.isin(labels[ys, xs], strong[strong > 0])
    ys, xs, m0, ux, uy, fwd, bwd = (a[keep] for a in (ys, xs, m0, ux, uy, fwd, bwd))

    curv = fwd - 2 * m0 + bwd
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(curv < 0, 0.5 * (bwd - fwd) / curv, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    ex = np.clip(xs + delta * ux, 0, w - 1)
    ey = np.clip(ys + delta * uy, 0, h - 1)
    theta = np.mod(np.degrees(np.arctan2(uy, ux)), 180.0)
    return EdgeMap(ex, ey, theta, m0, w, h)


def load_edge_map(path, width: int | None = None, height: int | None = None) -> EdgeMap:
    """Read an edge CSV (header ``x,y,theta_deg,strength``).

    Image dimensions default to the smallest frame containing every edge.
    """
    path = os.fspath(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise EdgeMapError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise EdgeMapError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise EdgeMapError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise EdgeMapError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    if width is None:
        width = int(math.ceil(arr[:, 0].max())) + 1 if len(arr) else 1
    if height is None:
        height = int(math.ceil(arr[:, 1].max())) + 1 if len(arr) else 1
    return EdgeMap(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], width, height)


def save_edge_map(em: EdgeMap, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for x, y, t, s in zip(em.x, em.y, em.theta, em.strength):
            fh.write(f"{float(x)!r},{float(y)!r},{float(t)!r},{float(s)!r}\n")
