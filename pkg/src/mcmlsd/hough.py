"""Probabilistic Hough accumulation with exact per-edge vote subtraction.

Every edge spreads a unit mass of votes over (rho, theta) bins with a
separable Gaussian kernel that stands in for its location and orientation
uncertainty.  The individual contributions are kept so that the votes of
edges explained by an extracted line can be removed exactly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import Line, normalize_line
from .edges import EdgeMap, OrientedEdge

# edges per accumulation chunk; bounds peak memory of the vote tensors
_CHUNK = 4096


@dataclass(frozen=True)
class HoughParams:
    delta_rho: float = 0.4
    delta_theta: float = 0.46
    sigma_pos: float = 0.5
    sigma_theta: float = 3.0
    max_lines: int = 500
    min_peak: float = 0.5
    # wide enough to take both flanks of a thin dark stroke (about 2.4 px apart)
    support_radius: float = 3.0
    # refit the centroid line to its supporting edges by weighted total least squares
    refit: bool = True

    def __post_init__(self):
        for name in ("delta_rho", "delta_theta", "sigma_pos", "sigma_theta", "support_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_lines < 1:
            raise ValueError("max_lines must be >= 1")
        if self.min_peak < 0:
            raise ValueError("min_peak must be non-negative")

    @property
    def n_theta(self) -> int:
        # theta bins must tile [0, 180) exactly for the seam wrap-around
        return max(1, int(round(180.0 / self.delta_theta)))

    @property
    def theta_step(self) -> float:
        return 180.0 / self.n_theta


@dataclass
class DetectedLine:
    line: Line
    peak_value: float
    supporting_edges: list[OrientedEdge]
    support_indices: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0, dtype=np.int64))


def angular_deviation(a, b):
    """Unsigned difference of two orientations modulo 180, in [0, 90]."""
    d = np.mod(np.asarray(a, dtype=np.float64) - b, 180.0)
    return np.minimum(d, 180.0 - d)


class HoughMap:
    """Accumulator over theta rows and rho columns.

    ``bins[j, r]`` is the mass at theta = j * theta_step and
    rho = (r - rho_center) * delta_rho.  ``rec_bins``/``rec_w`` hold the flat
    bin index and weight of every vote of every edge, one row per edge.
    """

    def __init__(self, em: EdgeMap, params: HoughParams):
        self.params = params
        self.edge_map = em
        self.n_theta = params.n_theta
        self.theta_step = params.theta_step
        self.diag = math.hypot(em.width, em.height)
        self._m_theta = int(math.floor(3 * params.sigma_theta / self.theta_step)) + 1
        self._m_rho = int(math.floor(3 * params.sigma_pos / params.delta_rho)) + 1
        self.rho_center = int(math.ceil(self.diag / params.delta_rho)) + self._m_rho
        self.n_rho = 2 * self.rho_center + 1
        self.bins = np.zeros((self.n_theta, self.n_rho))
        k = (2 * self._m_theta + 1) * (2 * self._m_rho + 1)
        self.rec_bins = np.zeros((len(em), k), dtype=np.int64)
        self.rec_w = np.zeros((len(em), k))
        self.alive = np.ones(len(em), dtype=bool)
        self._row_max = np.zeros(self.n_theta)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.theta_step

    @property
    def rhos(self) -> np.ndarray:
        return (np.arange(self.n_rho) - self.rho_center) * self.params.delta_rho

    def vote_records(self, i: int) -> list[tuple[int, int, float]]:
        """(theta index, rho index, weight) for each non-zero vote of edge i."""
        nz = self.rec_w[i] > 0
        flat, w = self.rec_bins[i][nz], self.rec_w[i][nz]
        return [(int(f // self.n_rho), int(f % self.n_rho), float(v)) for f, v in zip(flat, w)]

    def total_mass(self) -> float:
        return float(self.bins.sum())

    def _votes(self, x, y, theta):
        p = self.params
        sig_t, sig_r = p.sigma_theta, p.sigma_pos
        n = len(x)
        jt = np.rint(theta / self.theta_step).astype(np.int64)[:, None] + np.arange(-self._m_theta, self._m_theta + 1)
        ang = jt * self.theta_step
        dt = ang - theta[:, None]
        wt = np.where(np.abs(dt) <= 3 * sig_t, np.exp(-0.5 * (dt / sig_t) ** 2), 0.0)
        rad = np.radians(ang)
        rho = x[:, None] * np.cos(rad) + y[:, None] * np.sin(rad)
        # bins past the seam are stored at theta -/+ 180 with rho negated
        wrapped = (jt < 0) | (jt >= self.n_theta)
        rho = np.where(wrapped, -rho, rho)
        jt = np.mod(jt, self.n_theta)

        jr = np.rint(rho / p.delta_rho).astype(np.int64)[:, :, None] + np.arange(-self._m_rho, self._m_rho + 1)
        dr = jr * p.delta_rho - rho[:, :, None]
        wr = np.where(np.abs(dr) <= 3 * sig_r, np.exp(-0.5 * (dr / sig_r) ** 2), 0.0)
        w = wt[:, :, None] * wr
        total = w.sum(axis=(1, 2), keepdims=True)
        w = w / total
        flat = jt[:, :, None] * self.n_rho + (jr + self.rho_center)
        return flat.reshape(n, -1), w.reshape(n, -1)

    def _refresh_rows(self, rows):
        self._row_max[rows] = self.bins[rows].max(axis=1)

    def peak(self) -> tuple[int, int, float]:
        j = int(np.argmax(self._row_max))
        r = int(np.argmax(self.bins[j]))
        return j, r, float(self.bins[j, r])

    def subtract(self, edge_indices) -> None:
        idx = np.asarray(edge_indices, dtype=np.int64)
        idx = idx[self.alive[idx]]
        if not len(idx):
            return
        flat = self.rec_bins[idx].ravel()
        delta = np.bincount(flat, weights=self.rec_w[idx].ravel(), minlength=self.bins.size)
        self.bins -= delta.reshape(self.bins.shape)
        rows = np.unique(flat // self.n_rho)
        # rounding can leave tiny negatives
        self.bins[rows] = np.maximum(self.bins[rows], 0.0)
        self.alive[idx] = False
        self._refresh_rows(rows)

    def refine(self, j: int, r: int) -> Line:
        """Weighted centroid of the 3x3 neighbourhood around bin (j, r)."""
        p = self.params
        wsum = tsum = rsum = 0.0
        for dj in (-1, 0, 1):
            jj = j + dj
            flip = jj < 0 or jj >= self.n_theta
            row = self.bins[jj % self.n_theta]
            for dr in (-1, 0, 1):
                rr = r + dr
                if flip:
                    # the neighbour across the seam holds the mirrored rho
                    src = 2 * self.rho_center - rr
                else:
                    src = rr
                if not 0 <= src < self.n_rho:
                    continue
                w = max(float(row[src]), 0.0)
                wsum += w
                tsum += w * jj * self.theta_step
                rsum += w * (rr - self.rho_center) * p.delta_rho
        if wsum <= 0:
            return Line((r - self.rho_center) * p.delta_rho, j * self.theta_step)
        rho, theta = normalize_line(rsum / wsum, tsum / wsum)
        return Line(rho, theta)

    def dump(self, path) -> tuple[str, str]:
        """Write ``<path>.bin`` (little-endian float64, theta-major) and a
        text header ``<path>.hdr``."""
        base = os.fspath(path)
        if base.endswith(".bin"):
            base = base[:-4]
        bin_path, hdr_path = base + ".bin", base + ".hdr"
        self.bins.astype("<f8").tofile(bin_path)
        with open(hdr_path, "w", encoding="utf-8") as fh:
            fh.write(f"n_theta={self.n_theta}\n")
            fh.write(f"n_rho={self.n_rho}\n")
            fh.write(f"theta_step_deg={self.theta_step!r}\n")
            fh.write(f"delta_rho={self.params.delta_rho!r}\n")
            fh.write(f"rho_min={-self.rho_center * self.params.delta_rho!r}\n")
            fh.write("dtype=float64-le\nlayout=row-major theta-major\n")
        return bin_path, hdr_path


def load_dump(path) -> np.ndarray:
    base = os.fspath(path)
    if base.endswith(".bin") or base.endswith(".hdr"):
        base = base[:-4]
    header = {}
    with open(base + ".hdr", encoding="utf-8") as fh:
        for line in fh:
            k, _, v = line.strip().partition("=")
            header[k] = v
    data = np.fromfile(base + ".bin", dtype="<f8")
    return data.reshape(int(header["n_theta"]), int(header["n_rho"]))


def accumulate(em: EdgeMap, params: HoughParams = HoughParams()) -> HoughMap:
    hm = HoughMap(em, params)
    for start in range(0, len(em), _CHUNK):
        sl = slice(start, start + _CHUNK)
        flat, w = hm._votes(em.x[sl], em.y[sl], em.theta[sl])
        hm.rec_bins[sl] = flat
        hm.rec_w[sl] = w
    if len(em):
        # one bincount over all records in edge order keeps the sum deterministic
        hm.bins = np.bincount(hm.rec_bins.ravel(), weights=hm.rec_w.ravel(), minlength=hm.bins.size).reshape(
            hm.bins.shape
        )
    hm._refresh_rows(np.arange(hm.n_theta))
    return hm


def _support(hm: HoughMap, em: EdgeMap, line: Line, p: HoughParams) -> np.ndarray:
    """Live edges within the support radius of ``line`` and aligned with it."""
    idx = em.near_line_indices(line, p.support_radius)
    idx = idx[hm.alive[idx]]
    return idx[angular_deviation(em.theta[idx], line.theta) <= 3 * p.sigma_theta]


def fit_line(x, y, w=None) -> Line | None:
    """Weighted total-least-squares line through points, or ``None`` when the
    points do not determine a direction."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    w = np.ones(len(x)) if w is None else np.asarray(w, dtype=np.float64)
    if len(x) < 2 or w.sum() <= 0:
        return None
    w = w / w.sum()
    mx, my = w @ x, w @ y
    dx, dy = x - mx, y - my
    cov = np.array([[w @ (dx * dx), w @ (dx * dy)], [w @ (dx * dy), w @ (dy * dy)]])
    vals, vecs = np.linalg.eigh(cov)
    if vals[1] <= 0 or vals[0] / vals[1] > 0.5:
        return None
    nx, ny = vecs[:, 0]
    theta = math.degrees(math.atan2(ny, nx))
    rho, theta = normalize_line(mx * nx + my * ny, theta)
    return Line(rho, theta)


def extract_next_line(hm: HoughMap, em: EdgeMap | None = None, params: HoughParams | None = None):
    """Take the strongest remaining peak, or return ``None`` when exhausted."""
    em = hm.edge_map if em is None else em
    p = hm.params if params is None else params
    if len(em) != len(hm.alive):
        raise ValueError("edge map does not match the accumulated map")
    j, r, value = hm.peak()
    if value <= 0 or value < p.min_peak:
        return None
    line = hm.refine(j, r)
    idx = _support(hm, em, line, p)
    if p.refit and len(idx) >= 2:
        fitted = fit_line(em.x[idx], em.y[idx], em.strength[idx])
        if fitted is not None and angular_deviation(fitted.theta, line.theta) <= p.sigma_theta:
            line = fitted
            idx = _support(hm, em, line, p)
    if not len(idx):
        # guarantee progress: fall back to the edges voting into the peak bin
        flat = j * hm.n_rho + r
        hit = np.any((hm.rec_bins == flat) & (hm.rec_w > 0), axis=1) & hm.alive
        idx = np.flatnonzero(hit)
    hm.subtract(idx)
    return DetectedLine(line, value, [em.edge(i) for i in idx], idx)


def detect_lines(em: EdgeMap, params: HoughParams = HoughParams()) -> list[DetectedLine]:
    hm = accumulate(em, params)
    lines = []
    while len(lines) < params.max_lines:
        dl = extract_next_line(hm, em, params)
        if dl is None:
            break
        lines.append(dl)
    return lines
