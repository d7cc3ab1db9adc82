"""Robust 2D estimators: convex hull, RANSAC lines, vertical faces and L-shape corners."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import GroundFrame, Line2, Plane3, wrap_half_turn


class DegenerateFitError(ValueError):
    """Input points do not define the requested model."""


class NoConsensusError(ValueError):
    """No candidate model reached the minimum inlier count."""


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 200
    inlier_tolerance: float = 0.05
    min_inliers: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.min_inliers < 1:
            raise ValueError("max_iterations and min_inliers must be >= 1")
        if not self.inlier_tolerance > 0:
            raise ValueError("inlier_tolerance must be positive")


@dataclass(frozen=True, eq=False)
class HullPolygon:
    vertices: np.ndarray  # (M, 2), counter-clockwise

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        """Point-in-convex-polygon test (boundary counts as inside)."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        v = self.vertices
        m = v.shape[0]
        if m == 1:
            return np.linalg.norm(pts - v[0], axis=1) <= tol
        if m == 2:
            d = v[1] - v[0]
            rel = pts - v[0]
            t = np.clip(rel @ d / (d @ d), 0.0, 1.0)
            return np.linalg.norm(rel - t[:, None] * d, axis=1) <= tol
        inside = np.ones(pts.shape[0], dtype=bool)
        for i in range(m):
            a, b = v[i], v[(i + 1) % m]
            e = b - a
            cross = e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])
            inside &= cross >= -tol * max(1.0, float(np.hypot(*e)))
        return inside

    def extent(self) -> tuple[float, float]:
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(span[0]), float(span[1])


@dataclass(frozen=True, eq=False)
class RectangleEstimate:
    corners: np.ndarray  # (4, 2): A, B, C observed, D extrapolated
    yaw: float
    source: str  # "two_sides" | "ransac_line"

    @property
    def a(self) -> np.ndarray:
        return self.corners[0]

    @property
    def b(self) -> np.ndarray:
        return self.corners[1]

    @property
    def c(self) -> np.ndarray:
        return self.corners[2]

    @property
    def d(self) -> np.ndarray:
        return self.corners[3]


@dataclass(frozen=True, eq=False)
class VerticalFaceFit:
    plane: Plane3
    line: Line2  # in ground-plane coordinates
    inliers: np.ndarray
    side_facing: bool  # no candidate faced the ego x axis


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> HullPolygon:
    """Monotone-chain hull, counter-clockwise, collinear boundary points dropped."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("convex hull of an empty point set")
    uniq = np.unique(pts, axis=0)  # lexicographic (x, then y)
    if uniq.shape[0] <= 2:
        return HullPolygon(uniq)
    p = [tuple(row) for row in uniq]
    lower: list[tuple[float, float]] = []
    for q in p:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list[tuple[float, float]] = []
    for q in reversed(p):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    hull = lower[:-1] + upper[:-1]
    return HullPolygon(np.array(hull, dtype=np.float64))


def _tls_line(pts: np.ndarray) -> Line2:
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    d = evecs[:, 1]
    return Line2(tuple(centroid), tuple(d / np.linalg.norm(d)))


def _candidate_pairs(n: int, params: RansacParams) -> tuple[np.ndarray, np.ndarray]:
    total = n * (n - 1) // 2
    if total <= params.max_iterations:
        i, j = np.triu_indices(n, k=1)
        return i, j
    rng = np.random.default_rng(params.rng_seed)
    i = rng.integers(0, n, size=params.max_iterations)
    j = rng.integers(0, n - 1, size=params.max_iterations)
    j = j + (j >= i)
    return i, j


def _ransac(
    pts: np.ndarray, params: RansacParams, prefer: Optional[Callable[[np.ndarray], np.ndarray]] = None
) -> tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    """Best inlier masks: (overall, among candidates whose normal satisfies ``prefer``)."""
    n = pts.shape[0]
    i, j = _candidate_pairs(n, params)
    d = pts[j] - pts[i]
    norm = np.hypot(d[:, 0], d[:, 1])
    ok = norm > 0
    i, j, d, norm = i[ok], j[ok], d[ok], norm[ok]
    if i.size == 0:
        raise DegenerateFitError("all points coincide; no line is defined")
    normals = np.column_stack((-d[:, 1], d[:, 0])) / norm[:, None]
    tol = params.inlier_tolerance
    counts = np.empty(i.size, dtype=np.int64)
    sse = np.empty(i.size, dtype=np.float64)
    chunk = max(1, 2_000_000 // max(n, 1))
    for s in range(0, i.size, chunk):
        e = min(s + chunk, i.size)
        res = (pts[:, 0][None, :] - pts[i[s:e], 0][:, None]) * normals[s:e, 0:1] + (
            pts[:, 1][None, :] - pts[i[s:e], 1][:, None]
        ) * normals[s:e, 1:2]
        res = np.abs(res)
        inl = res <= tol
        counts[s:e] = inl.sum(axis=1)
        sse[s:e] = np.where(inl, res * res, 0.0).sum(axis=1)

    def pick(sel: np.ndarray) -> Optional[np.ndarray]:
        idx = np.flatnonzero(sel)
        if idx.size == 0:
            return None
        # lexsort: last key is primary; first occurrence wins exact ties
        order = np.lexsort((idx, sse[idx], -counts[idx]))
        k = idx[order[0]]
        r = np.abs((pts - pts[i[k]]) @ normals[k])
        return r <= tol

    best = pick(np.ones(i.size, dtype=bool))
    preferred = pick(prefer(normals)) if prefer is not None else None
    return best, preferred


def ransac_line(points, params: RansacParams = RansacParams()) -> tuple[Line2, np.ndarray]:
    """Consensus line over point pairs, refined by total least squares on its inliers."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] < 2:
        raise DegenerateFitError("need at least 2 points for a line")
    best, _ = _ransac(pts, params)
    inliers = np.flatnonzero(best)
    if inliers.size < params.min_inliers:
        raise NoConsensusError(f"best line has {inliers.size} inliers, need {params.min_inliers}")
    return _tls_line(pts[inliers]), inliers


def _faces_ego_x(normals: np.ndarray) -> np.ndarray:
    # normal within +-45 deg of the ego x axis (either sign)
    return np.abs(normals[:, 0]) >= np.abs(normals[:, 1])


def fit_vertical_plane(points, ground: Plane3, params: RansacParams = RansacParams()) -> VerticalFaceFit:
    """Vertical face through 3D points, preferring faces seen head-on from the ego.

    The points are projected onto the ground plane and a RANSAC line is fitted;
    the line is lifted into a plane containing the ground normal. The returned
    plane normal points toward the ego origin.
    """
    xyz = getattr(points, "xyz", points)
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    frame = GroundFrame.from_plane(ground)
    uv = frame.project(xyz)
    if uv.shape[0] < 2:
        raise DegenerateFitError("need at least 2 points for a vertical plane")
    best, preferred = _ransac(uv, params, prefer=_faces_ego_x)
    side_facing = preferred is None or np.count_nonzero(preferred) < params.min_inliers
    mask = best if side_facing else preferred
    inliers = np.flatnonzero(mask)
    if inliers.size < params.min_inliers:
        raise NoConsensusError(f"best face has {inliers.size} inliers, need {params.min_inliers}")
    line = _tls_line(uv[inliers])
    nx, ny = line.normal
    px, py = line.point
    if nx * (0.0 - px) + ny * (0.0 - py) < 0:
        nx, ny = -nx, -ny
    n3 = nx * frame.e1 + ny * frame.e2
    n3 = n3 / np.linalg.norm(n3)
    anchor = frame.origin + px * frame.e1 + py * frame.e2
    plane = Plane3(tuple(n3), -float(n3 @ anchor))
    return VerticalFaceFit(plane, line, inliers, bool(side_facing))


def _max_area_triangle(v: np.ndarray) -> tuple[int, int, int]:
    m = v.shape[0]
    best = (-1.0, 0, 1, 2)
    for a in range(m - 2):
        b = np.arange(a + 1, m - 1)
        ab = v[b] - v[a]
        c = np.arange(a + 2, m)
        ac = v[c] - v[a]
        area = np.abs(ab[:, None, 0] * ac[None, :, 1] - ab[:, None, 1] * ac[None, :, 0])
        valid = b[:, None] < c[None, :]
        area = np.where(valid, area, -1.0)
        k = int(np.argmax(area))
        bi, ci = divmod(k, c.size)
        if area[bi, ci] > best[0]:
            best = (float(area[bi, ci]), a, int(b[bi]), int(c[ci]))
    return best[1], best[2], best[3]


def _angle_at(p, q, r) -> float:
    """Interior angle at q of the path p-q-r, radians."""
    u, w = p - q, r - q
    return math.atan2(abs(u[0] * w[1] - u[1] * w[0]), float(u @ w))


def rectangle_from_hull(
    hull: HullPolygon, min_side: float, angle_tolerance: float = math.radians(35.0)
) -> Optional[RectangleEstimate]:
    """Corner-extrapolated rectangle from an L-shaped hull, or ``None`` if only one side shows.

    The three dominant hull vertices are taken from the largest inscribed
    triangle; B is the one whose angle is closest to a right angle, and the
    hidden corner is D = A + C - B. Yaw is the length-weighted circular mean of
    the two side directions (the second rotated by 90 degrees), reported along
    the longer side.
    """
    v = hull.vertices
    if v.shape[0] < 3:
        return None
    ex, ey = hull.extent()
    if not (ex > min_side and ey > min_side):
        return None
    tri = _max_area_triangle(v)
    pts = [v[k] for k in tri]
    angles = [_angle_at(pts[(k - 1) % 3], pts[k], pts[(k + 1) % 3]) for k in range(3)]
    kb = int(np.argmin([abs(a - math.pi / 2) for a in angles]))
    if abs(angles[kb] - math.pi / 2) > angle_tolerance:
        return None
    a, b, c = pts[(kb - 1) % 3], pts[kb], pts[(kb + 1) % 3]
    d = a + (c - b)
    ab, bc = a - b, c - b
    len_ab, len_bc = float(np.hypot(*ab)), float(np.hypot(*bc))
    t1 = math.atan2(ab[1], ab[0])
    t2 = math.atan2(bc[1], bc[0]) + math.pi / 2
    s = len_ab * math.sin(2 * t1) + len_bc * math.sin(2 * t2)
    co = len_ab * math.cos(2 * t1) + len_bc * math.cos(2 * t2)
    axis = 0.5 * math.atan2(s, co)  # aligned with AB
    yaw = axis if len_ab >= len_bc else axis + math.pi / 2
    return RectangleEstimate(np.array([a, b, c, d]), wrap_half_turn(yaw), "two_sides")


def rectangle_from_line(points, line: Line2) -> RectangleEstimate:
    """Bounding rectangle of ``points`` aligned with ``line``; yaw is the line angle."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    t = np.array(line.direction)
    nrm = np.array(line.normal)
    s = pts @ t
    q = pts @ nrm
    s0, s1, q0, q1 = s.min(), s.max(), q.min(), q.max()
    a = s1 * t + q0 * nrm
    b = s0 * t + q0 * nrm
    c = s0 * t + q1 * nrm
    d = a + (c - b)
    return RectangleEstimate(np.array([a, b, c, d]), wrap_half_turn(line.angle), "ransac_line")
