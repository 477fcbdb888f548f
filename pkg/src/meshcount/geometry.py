"""Projective geometry kernel.

Homography estimation (DLT with Hartley normalization, RANSAC), point and
polygon projection, polygon IoU, and metric ground-plane distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    NoConsensus,
    PointAtInfinity,
    TooFewPoints,
)

_W_EPS = 1e-12  # homogeneous coordinate below this is "at infinity"


@dataclass(frozen=True)
class Point2:
    """A finite 2-D point; pixels or meters depending on context."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class Correspondence:
    """A matched point pair: `src` on the source plane, `dst` on the target."""

    src: Point2
    dst: Point2


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 2000
    inlier_threshold: float = 3.0  # px, symmetric transfer error
    confidence: float = 0.995
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be > 0")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


class Homography:
    """A 3x3 projective transform with canonical scale.

    The matrix is normalized so its element of largest magnitude equals 1,
    which makes estimates comparable without a scale ambiguity.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        pivot = m.flat[np.argmax(np.abs(m))]
        if pivot == 0.0:
            raise DegenerateConfiguration("zero homography matrix")
        m = m / pivot
        if abs(np.linalg.det(m)) <= _W_EPS:
            raise DegenerateConfiguration("homography is not invertible")
        m.setflags(write=False)
        self._m = m

    @property
    def matrix(self) -> np.ndarray:
        """The normalized 3x3 matrix (read-only view)."""
        return self._m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self._m))

    def __repr__(self):
        return f"Homography({self._m.tolist()})"


class Polygon:
    """A simple polygon with positive area, stored counter-clockwise.

    Input vertices may be given in either orientation; the constructor
    verifies simplicity and flips clockwise input.
    """

    __slots__ = ("_v",)

    def __init__(self, vertices):
        v = np.array([[p.x, p.y] if isinstance(p, Point2) else p for p in vertices], dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 (x, y) vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("polygon vertices must be finite")
        area2 = _signed_area2(v)
        if area2 == 0.0:
            raise ValueError("polygon has zero area")
        if area2 < 0.0:
            v = v[::-1].copy()
        if not _is_simple(v):
            raise ValueError("polygon is self-intersecting")
        v.setflags(write=False)
        self._v = v

    @classmethod
    def box(cls, x0: float, y0: float, x1: float, y1: float) -> "Polygon":
        """Axis-aligned rectangle from two opposite corners."""
        x0, x1 = min(x0, x1), max(x0, x1)
        y0, y1 = min(y0, y1), max(y0, y1)
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def area(self) -> float:
        return 0.5 * _signed_area2(self._v)

    @property
    def centroid(self) -> Point2:
        v = self._v
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a2 = cross.sum()
        cx = float(((x + xn) * cross).sum() / (3.0 * a2))
        cy = float(((y + yn) * cross).sum() / (3.0 * a2))
        return Point2(cx, cy)

    def bounds(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the axis-aligned bounding box."""
        v = self._v
        return (
            float(v[:, 0].min()),
            float(v[:, 1].min()),
            float(v[:, 0].max()),
            float(v[:, 1].max()),
        )

    def is_axis_aligned_box(self) -> bool:
        v = self._v
        if v.shape[0] != 4:
            return False
        edges = np.roll(v, -1, axis=0) - v
        return bool(np.all((edges[:, 0] == 0.0) | (edges[:, 1] == 0.0)))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Even-odd test for an (n, 2) array of points."""
        return points_in_polygon(points, self._v)

    def __repr__(self):
        return f"Polygon({self._v.tolist()})"


def _signed_area2(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q2 - q1, p1 - q1)
    d2 = _cross2(q2 - q1, p2 - q1)
    d3 = _cross2(p2 - p1, q1 - p1)
    d4 = _cross2(p2 - p1, q2 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _is_simple(v: np.ndarray) -> bool:
    n = v.shape[0]
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            b1, b2 = v[j], v[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                return False
    return True


def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Even-odd ray-casting test, vectorized over the points."""
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(pts.shape[0], dtype=bool)
    n = vertices.shape[0]
    j = n - 1
    for i in range(n):
        xi, yi = vertices[i]
        xj, yj = vertices[j]
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < xint)
        j = i
    return inside[0] if squeeze else inside


# -- homography estimation ---------------------------------------------------


def _normalization_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d <= _W_EPS:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array(
        [[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]]
    )


def _collinear(a, b, c) -> bool:
    # area below 1e-9 of the triple's bounding-box area counts as collinear
    area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    pts = np.array([a, b, c])
    span = pts.max(axis=0) - pts.min(axis=0)
    box = max(span[0] * span[1], span[0] ** 2, span[1] ** 2, _W_EPS)
    return area2 < 2e-9 * box


def _corr_arrays(corrs) -> tuple[np.ndarray, np.ndarray]:
    src = np.array([[c.src.x, c.src.y] for c in corrs], dtype=float)
    dst = np.array([[c.dst.x, c.dst.y] for c in corrs], dtype=float)
    return src, dst


def estimate_homography_dlt(corrs) -> Homography:
    """Least-squares homography from >= 4 correspondences via the DLT.

    Source and target points are Hartley-normalized before building the
    design matrix, and the solution is the right singular vector of its
    smallest singular value.

    Raises TooFewPoints below four pairs and DegenerateConfiguration when
    the design matrix is rank-deficient (e.g. three collinear source points).
    """
    corrs = list(corrs)
    n = len(corrs)
    if n < 4:
        raise TooFewPoints(f"need at least 4 correspondences, got {n}")
    src, dst = _corr_arrays(corrs)
    if n == 4:
        for tri in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
            if _collinear(*src[list(tri)]):
                raise DegenerateConfiguration("three of four source points are collinear")
    t_src = _normalization_transform(src)
    t_dst = _normalization_transform(dst)
    sh = src @ t_src[:2, :2].T + t_src[:2, 2]
    dh = dst @ t_dst[:2, :2].T + t_dst[:2, 2]

    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = -sh
    a[0::2, 2] = -1.0
    a[0::2, 6:8] = sh * dh[:, 0:1]
    a[0::2, 8] = dh[:, 0]
    a[1::2, 3:5] = -sh
    a[1::2, 5] = -1.0
    a[1::2, 6:8] = sh * dh[:, 1:2]
    a[1::2, 8] = dh[:, 1]

    _, s, vt = np.linalg.svd(a)
    if s[7] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("design matrix is rank-deficient")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    return Homography(h)


def _project_array(matrix: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ones = np.ones((pts.shape[0], 1))
    hom = np.hstack([pts, ones]) @ matrix.T
    w = hom[:, 2]
    if np.any(np.abs(w) <= _W_EPS):
        raise PointAtInfinity("projection has a vanishing homogeneous coordinate")
    return hom[:, :2] / w[:, None]


def project_point(h: Homography, p: Point2) -> Point2:
    """Apply the homography to one point with projective division."""
    out = _project_array(h.matrix, np.array([[p.x, p.y]]))
    return Point2(float(out[0, 0]), float(out[0, 1]))


def project_polygon(h: Homography, poly: Polygon) -> Polygon:
    """Project every vertex; orientation is re-normalized to CCW."""
    return Polygon(_project_array(h.matrix, poly.vertices))


def symmetric_transfer_error(h: Homography, corrs) -> np.ndarray:
    """Per-pair mean of forward and backward reprojection distances."""
    src, dst = _corr_arrays(corrs)
    m = h.matrix
    m_inv = np.linalg.inv(m)
    err = np.full(src.shape[0], np.inf)

    def _one_way(mat, a, b):
        ones = np.ones((a.shape[0], 1))
        hom = np.hstack([a, ones]) @ mat.T
        w = hom[:, 2]
        ok = np.abs(w) > _W_EPS
        d = np.full(a.shape[0], np.inf)
        d[ok] = np.sqrt(((hom[ok, :2] / w[ok, None] - b[ok]) ** 2).sum(axis=1))
        return d

    fwd = _one_way(m, src, dst)
    bwd = _one_way(m_inv, dst, src)
    both = np.isfinite(fwd) & np.isfinite(bwd)
    err[both] = 0.5 * (fwd[both] + bwd[both])
    return err


def ransac_homography(corrs, params: RansacParams = RansacParams()):
    """Robust homography fit: sample 4 pairs, fit, score, keep best consensus.

    The residual is the symmetric transfer error; the iteration budget is
    adaptively shrunk from the best inlier ratio at the requested confidence
    and capped at ``params.max_iterations``. Deterministic for a fixed seed.

    Returns (Homography refit on the consensus set, inlier mask).
    """
    corrs = list(corrs)
    n = len(corrs)
    if n < 4:
        raise TooFewPoints(f"need at least 4 correspondences, got {n}")
    rng = np.random.default_rng(params.seed)

    best_mask = None
    best_count = 0
    best_err = np.inf
    needed = params.max_iterations
    it = 0
    while it < min(params.max_iterations, needed):
        it += 1
        sample = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography_dlt([corrs[k] for k in sample])
        except DegenerateConfiguration:
            continue
        err = symmetric_transfer_error(h, corrs)
        mask = err < params.inlier_threshold
        count = int(mask.sum())
        total = float(err[mask].sum()) if count else np.inf
        if count > best_count or (count == best_count and total < best_err):
            best_count = count
            best_err = total
            best_mask = mask
            w = count / n
            if w >= 1.0:
                needed = it
            elif w > 0.0:
                denom = math.log1p(-(w**4)) if w**4 < 1.0 else -np.inf
                if denom < 0.0:
                    needed = min(needed, it + math.ceil(math.log(1.0 - params.confidence) / denom))

    if best_mask is None or best_count < 4:
        raise NoConsensus(f"best consensus has {best_count} inliers")
    h = estimate_homography_dlt([c for c, m in zip(corrs, best_mask) if m])
    return h, [bool(b) for b in best_mask]


# -- polygon IoU --------------------------------------------------------------


def iou(a: Polygon, b: Polygon, grid_scale: float = 4.0) -> float:
    """Intersection over union of two polygons, in [0, 1].

    Axis-aligned rectangles take an exact analytic path; everything else is
    rasterized on a shared grid with ``grid_scale`` samples per pixel.
    """
    if not grid_scale > 0:
        raise ValueError("grid_scale must be positive")
    if a.is_axis_aligned_box() and b.is_axis_aligned_box():
        ax0, ay0, ax1, ay1 = a.bounds()
        bx0, by0, bx1, by1 = b.bounds()
        iw = min(ax1, bx1) - max(ax0, bx0)
        ih = min(ay1, by1) - max(ay0, by0)
        inter = max(0.0, iw) * max(0.0, ih)
        union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
        return inter / union
    return raster_iou(a, b, grid_scale)


def raster_iou(a: Polygon, b: Polygon, grid_scale: float = 4.0) -> float:
    """IoU by counting sample points on a grid covering both polygons."""
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    x0, y0 = min(ax0, bx0), min(ay0, by0)
    x1, y1 = max(ax1, bx1), max(ay1, by1)
    # quick reject: disjoint bounding boxes cannot intersect
    if min(ax1, bx1) < max(ax0, bx0) or min(ay1, by1) < max(ay0, by0):
        return 0.0
    # samples sit on a global lattice so pixel-aligned edges split cells evenly
    step = 1.0 / grid_scale
    ix0, ix1 = math.floor(x0 / step), math.ceil(x1 / step)
    iy0, iy1 = math.floor(y0 / step), math.ceil(y1 / step)
    xs = (np.arange(ix0, max(ix1, ix0 + 1)) + 0.5) * step
    ys = (np.arange(iy0, max(iy1, iy0 + 1)) + 0.5) * step
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    in_a = points_in_polygon(pts, a.vertices)
    in_b = points_in_polygon(pts, b.vertices)
    union = int((in_a | in_b).sum())
    if union == 0:
        return 0.0
    return float((in_a & in_b).sum()) / union


# -- metric ground plane ------------------------------------------------------


def ground_distance(h_ground: Homography, a: Point2, b: Point2) -> float:
    """Euclidean distance in meters after unprojecting both pixel points."""
    pa = project_point(h_ground, a)
    pb = project_point(h_ground, b)
    return math.hypot(pa.x - pb.x, pa.y - pb.y)


def distance_violations(positions, threshold: float):
    """Connected groups of points closer than ``threshold`` (strictly).

    Returns components of the violation graph with at least two members,
    each sorted by index; points exactly at the threshold do not violate.
    """
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    pts = np.array([[p.x, p.y] for p in positions], dtype=float)
    n = pts.shape[0]
    if n == 0:
        return []
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    adj = dist < threshold
    np.fill_diagonal(adj, False)

    seen = np.zeros(n, dtype=bool)
    groups = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            k = stack.pop()
            comp.append(k)
            for m in np.nonzero(adj[k])[0]:
                if not seen[m]:
                    seen[m] = True
                    stack.append(int(m))
        if len(comp) >= 2:
            groups.append(sorted(comp))
    groups.sort(key=lambda g: g[0])
    return groups
