"""Deterministic geometry kernel: planes, RANSAC fits, hulls, up-right boxes.

All randomized fits are pure functions of (input, seed). Angular units are
radians internally; callers configure tolerances in degrees where noted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


class Degenerate(GeometryError):
    pass


class EmptyInput(GeometryError):
    pass


MIN_EXTENT = 1e-3  # boxes are clamped to 1mm per axis to keep volumes nonzero


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise Degenerate("zero-length vector cannot be normalized")
    if abs(n - 1.0) < 1e-12:
        return v  # already unit; keep bits stable across (de)serialization
    return v / n


@dataclass
class Plane:
    """Plane as normal . x + offset = 0 with |normal| = 1."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = _unit(self.normal)
        self.offset = float(self.offset)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.normal + self.offset

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def to_dict(self) -> dict:
        return {"normal": [float(x) for x in self.normal], "offset": self.offset}

    @staticmethod
    def from_dict(d: dict) -> "Plane":
        return Plane(np.asarray(d["normal"], dtype=np.float64), float(d["offset"]))


@dataclass
class Rect2:
    """Oriented rectangle in 2D floor coordinates."""

    center: np.ndarray
    axis: np.ndarray  # unit vector of the first half-extent
    half_extents: np.ndarray  # (2,) positive

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.axis = _unit(self.axis)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64)
        if np.any(self.half_extents <= 0):
            raise GeometryError("rect half_extents must be positive")

    @property
    def perp(self) -> np.ndarray:
        return np.array([-self.axis[1], self.axis[0]])

    def corners(self) -> np.ndarray:
        """4 corners in CCW order."""
        a = self.axis * self.half_extents[0]
        b = self.perp * self.half_extents[1]
        return np.array([self.center + a + b, self.center - a + b,
                         self.center - a - b, self.center + a - b])

    def area(self) -> float:
        return float(4.0 * self.half_extents[0] * self.half_extents[1])

    def diagonal(self) -> float:
        return float(2.0 * np.linalg.norm(self.half_extents))

    def to_dict(self) -> dict:
        return {"center": [float(x) for x in self.center],
                "axis": [float(x) for x in self.axis],
                "half_extents": [float(x) for x in self.half_extents]}

    @staticmethod
    def from_dict(d: dict) -> "Rect2":
        return Rect2(np.asarray(d["center"]), np.asarray(d["axis"]),
                     np.asarray(d["half_extents"]))


@dataclass
class Cuboid:
    """Up-right oriented box.

    half_extents run along (forward, up x forward, up); up is the floor
    normal for every box in a parsed scene.
    """

    center: np.ndarray
    up: np.ndarray
    forward: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.up = _unit(self.up)
        self.forward = _unit(self.forward)
        if abs(float(self.up @ self.forward)) > 1e-6:
            raise GeometryError("cuboid up and forward must be orthogonal")
        he = np.asarray(self.half_extents, dtype=np.float64)
        self.half_extents = np.maximum(he, MIN_EXTENT)

    @property
    def side(self) -> np.ndarray:
        return np.cross(self.up, self.forward)

    def axes(self) -> np.ndarray:
        """Rows are the body axes (forward, side, up)."""
        return np.array([self.forward, self.side, self.up])

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                          for sz in (-1, 1)], dtype=np.float64)
        return self.center + (signs * self.half_extents) @ self.axes()

    def volume(self) -> float:
        return float(np.prod(2.0 * self.half_extents))

    def to_body(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.axes().T

    def to_dict(self) -> dict:
        return {"center": [float(x) for x in self.center],
                "up": [float(x) for x in self.up],
                "forward": [float(x) for x in self.forward],
                "half_extents": [float(x) for x in self.half_extents]}

    @staticmethod
    def from_dict(d: dict) -> "Cuboid":
        return Cuboid(np.asarray(d["center"]), np.asarray(d["up"]),
                      np.asarray(d["forward"]), np.asarray(d["half_extents"]))


@dataclass
class FloorFrame:
    """2D coordinate chart on the floor plane.

    Origin is the floor point closest to the camera; e1 follows the first
    wall's in-plane normal when a wall exists, else a canonical axis.
    """

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    up: np.ndarray
    plane: Plane = field(repr=False, default=None)

    @staticmethod
    def from_plane(plane: Plane, wall_normal: np.ndarray | None = None) -> "FloorFrame":
        up = plane.normal
        origin = -plane.offset * up  # closest point of the plane to (0,0,0)
        e1 = None
        if wall_normal is not None:
            w = np.asarray(wall_normal, dtype=np.float64)
            w = w - (w @ up) * up
            if np.linalg.norm(w) > 1e-6:
                e1 = w / np.linalg.norm(w)
        if e1 is None:
            for cand in (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])):
                w = cand - (cand @ up) * up
                if np.linalg.norm(w) > 1e-6:
                    e1 = w / np.linalg.norm(w)
                    break
        e2 = np.cross(up, e1)
        return FloorFrame(origin=origin, e1=e1, e2=e2, up=up, plane=plane)

    def to_2d(self, points: np.ndarray) -> np.ndarray:
        d = np.asarray(points, dtype=np.float64) - self.origin
        return np.stack([d @ self.e1, d @ self.e2], axis=-1)

    def to_3d(self, points2: np.ndarray, height: float | np.ndarray = 0.0) -> np.ndarray:
        points2 = np.asarray(points2, dtype=np.float64)
        h = np.asarray(height, dtype=np.float64)
        return (self.origin + np.outer(points2[..., 0].ravel(), self.e1).reshape(points2.shape[:-1] + (3,))
                + np.outer(points2[..., 1].ravel(), self.e2).reshape(points2.shape[:-1] + (3,))
                + np.multiply.outer(h, self.up))

    def height(self, points: np.ndarray) -> np.ndarray:
        return self.plane.signed_distance(points)


# ---------------------------------------------------------------------------
# plane / line fitting


def lstsq_plane(points: np.ndarray) -> Plane:
    """Least-squares plane through a point set (total least squares)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise Degenerate("need >= 3 points for a plane")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # smallest right singular vector = plane normal
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] < 1e-12:
        raise Degenerate("points are collinear")
    normal = vt[2]
    normal = _canonical_sign_3d(normal)
    return Plane(normal, -float(normal @ centroid))


def _canonical_sign_3d(n: np.ndarray) -> np.ndarray:
    idx = int(np.argmax(np.abs(n)))
    return -n if n[idx] < 0 else n


def fit_plane_ransac(points: np.ndarray, iterations: int = 500,
                     inlier_tol: float = 0.015, rng_seed: int = 0,
                     max_hypo_points: int = 5000):
    """RANSAC plane fit; returns (Plane, inlier index array).

    The winning hypothesis is refit by least squares on its inliers and the
    inlier set recomputed against the refit plane. Deterministic per seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise Degenerate("need >= 3 points")
    if pts.shape[0] == 3:
        plane = lstsq_plane(pts)
        return plane, np.arange(3)
    rng = np.random.default_rng(rng_seed)
    if pts.shape[0] > max_hypo_points:
        score_idx = rng.choice(pts.shape[0], size=max_hypo_points, replace=False)
        score_pts = pts[score_idx]
    else:
        score_pts = pts
    n = pts.shape[0]
    tri = np.array([rng.choice(n, size=3, replace=False) for _ in range(iterations)])
    p0, p1, p2 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    normals = np.cross(p1 - p0, p2 - p0)
    lens = np.linalg.norm(normals, axis=1)
    ok = lens > 1e-12
    if not np.any(ok):
        raise Degenerate("all sampled triples collinear")
    normals = normals[ok] / lens[ok, None]
    offsets = -np.einsum("ij,ij->i", normals, p0[ok])
    dists = np.abs(score_pts @ normals.T + offsets)  # (Ns, H)
    counts = (dists <= inlier_tol).sum(axis=0)
    best = int(np.argmax(counts))
    best_plane = Plane(normals[best], offsets[best])
    inliers = np.flatnonzero(np.abs(best_plane.signed_distance(pts)) <= inlier_tol)
    if inliers.size >= 3:
        try:
            best_plane = lstsq_plane(pts[inliers])
        except Degenerate:
            pass
        inliers = np.flatnonzero(np.abs(best_plane.signed_distance(pts)) <= inlier_tol)
    return best_plane, inliers


def point_plane_distance(points: np.ndarray, plane: Plane) -> float:
    """Closest absolute distance from a point set to a plane."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInput("empty point set")
    return float(np.min(np.abs(plane.signed_distance(pts))))


def _canonical_sign_2d(d: np.ndarray) -> np.ndarray:
    if d[0] < -1e-12 or (abs(d[0]) <= 1e-12 and d[1] < 0):
        return -d
    return d


def fit_line_ransac(points: np.ndarray, iterations: int = 300,
                    inlier_tol: float = 0.02, rng_seed: int = 0) -> np.ndarray:
    """RANSAC 2D line fit; returns a canonical unit direction.

    Sign convention: positive x, ties resolved to positive y.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.shape[0] < 2:
        raise Degenerate("need >= 2 distinct points")
    if pts.shape[0] == 2:
        return _canonical_sign_2d(_unit(pts[1] - pts[0]))
    rng = np.random.default_rng(rng_seed)
    n = pts.shape[0]
    pairs = np.array([rng.choice(n, size=2, replace=False) for _ in range(iterations)])
    a, b = pts[pairs[:, 0]], pts[pairs[:, 1]]
    dirs = b - a
    lens = np.linalg.norm(dirs, axis=1)
    ok = lens > 1e-12
    dirs = dirs[ok] / lens[ok, None]
    a = a[ok]
    # |cross(dir, p - a)| per hypothesis
    rel = pts[None, :, :] - a[:, None, :]
    cross = np.abs(dirs[:, None, 0] * rel[:, :, 1] - dirs[:, None, 1] * rel[:, :, 0])
    counts = (cross <= inlier_tol).sum(axis=1)
    best = int(np.argmax(counts))
    inl = cross[best] <= inlier_tol
    sub = pts[inl]
    centered = sub - sub.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return _canonical_sign_2d(vt[0])


# ---------------------------------------------------------------------------
# hulls and polygons


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, CCW, strictly convex vertices only."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if pts.shape[0] < 3:
        raise Degenerate("need >= 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-12:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-12:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        raise Degenerate("points are collinear")
    return hull


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon_halfplane(poly: np.ndarray, normal: np.ndarray, limit: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon against normal . p <= limit."""
    if poly.shape[0] == 0:
        return poly
    out: list[np.ndarray] = []
    d = poly @ normal - limit
    n = poly.shape[0]
    for i in range(n):
        j = (i + 1) % n
        pi, pj = poly[i], poly[j]
        di, dj = d[i], d[j]
        if di <= 1e-12:
            out.append(pi)
            if dj > 1e-12:
                t = di / (di - dj)
                out.append(pi + t * (pj - pi))
        elif dj <= 1e-12:
            t = di / (di - dj)
            out.append(pi + t * (pj - pi))
    return np.array(out) if out else np.zeros((0, 2))


def rect_clip_polygon(poly: np.ndarray, r: Rect2) -> np.ndarray:
    for normal, limit in ((r.axis, r.half_extents[0] + r.axis @ r.center),
                          (-r.axis, r.half_extents[0] - r.axis @ r.center),
                          (r.perp, r.half_extents[1] + r.perp @ r.center),
                          (-r.perp, r.half_extents[1] - r.perp @ r.center)):
        poly = clip_polygon_halfplane(poly, normal, limit)
        if poly.shape[0] == 0:
            break
    return poly


def rect_intersection_area(a: Rect2, b: Rect2) -> float:
    """Exact area of the convex intersection of two oriented rectangles."""
    poly = rect_clip_polygon(a.corners(), b)
    if poly.shape[0] < 3:
        return 0.0
    return polygon_area(poly)


def point_in_rect(p: np.ndarray, r: Rect2) -> bool:
    d = np.asarray(p, dtype=np.float64) - r.center
    return (abs(float(d @ r.axis)) <= r.half_extents[0] + 1e-12
            and abs(float(d @ r.perp)) <= r.half_extents[1] + 1e-12)


def _segment_distance(p1, p2, q1, q2) -> float:
    """Min distance between 2D segments p1p2 and q1q2."""
    def pt_seg(p, a, b):
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom < 1e-18 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
        return float(np.linalg.norm(p - (a + t * ab)))

    def intersects(a, b, c, d):
        def ccw(u, v, w):
            return (w[1] - u[1]) * (v[0] - u[0]) - (v[1] - u[1]) * (w[0] - u[0])
        d1, d2 = ccw(c, d, a), ccw(c, d, b)
        d3, d4 = ccw(a, b, c), ccw(a, b, d)
        return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))

    if intersects(p1, p2, q1, q2):
        return 0.0
    return min(pt_seg(p1, q1, q2), pt_seg(p2, q1, q2),
               pt_seg(q1, p1, p2), pt_seg(q2, p1, p2))


def rect_distance(a: Rect2, b: Rect2) -> float:
    """Closest distance between two rectangle boundaries; 0 when overlapping."""
    if rect_intersection_area(a, b) > 0 or point_in_rect(b.center, a) or point_in_rect(a.center, b):
        return 0.0
    ca, cb = a.corners(), b.corners()
    best = np.inf
    for i in range(4):
        for j in range(4):
            d = _segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4])
            best = min(best, d)
    return float(best)


# ---------------------------------------------------------------------------
# boxes


def fit_upright_obb(points: np.ndarray, up: np.ndarray, forward: np.ndarray) -> Cuboid:
    """Smallest axis-extents box containing the points in the given frame."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyInput("no points")
    pts = pts.reshape(-1, 3)
    up = _unit(up)
    forward = np.asarray(forward, dtype=np.float64)
    forward = forward - (forward @ up) * up
    forward = _unit(forward)
    side = np.cross(up, forward)
    axes = np.array([forward, side, up])
    q = pts @ axes.T
    lo, hi = q.min(axis=0), q.max(axis=0)
    center = ((lo + hi) / 2.0) @ axes
    he = (hi - lo) / 2.0
    return Cuboid(center=center, up=up, forward=forward, half_extents=he)


def cuboid_rect(c: Cuboid, frame: FloorFrame) -> Rect2:
    """Floor-plane projection of an up-right cuboid."""
    center2 = frame.to_2d(c.center[None, :])[0]
    fw2 = np.array([c.forward @ frame.e1, c.forward @ frame.e2])
    return Rect2(center=center2, axis=fw2, half_extents=c.half_extents[:2])


def cuboid_bottom(c: Cuboid, floor: Plane) -> float:
    return float(floor.signed_distance(c.center[None, :])[0] - c.half_extents[2])


def cuboid_top(c: Cuboid, floor: Plane) -> float:
    return float(floor.signed_distance(c.center[None, :])[0] + c.half_extents[2])


def cuboid_contains(outer: Cuboid, inner: Cuboid, tol: float = 0.005) -> bool:
    q = outer.to_body(inner.corners())
    return bool(np.all(np.abs(q) <= outer.half_extents + tol))


def _interval_overlap(lo1, hi1, lo2, hi2, eps=1e-12) -> bool:
    return lo1 <= hi2 + eps and lo2 <= hi1 + eps


def cuboids_intersect(a: Cuboid, b: Cuboid) -> bool:
    """Overlap test for boxes sharing the up direction (closed intervals)."""
    if abs(abs(float(a.up @ b.up)) - 1.0) > 1e-6:
        raise GeometryError("cuboids_intersect expects a shared up axis")
    u = a.up
    za = float(a.center @ u)
    zb = float(b.center @ u)
    if not _interval_overlap(za - a.half_extents[2], za + a.half_extents[2],
                             zb - b.half_extents[2], zb + b.half_extents[2]):
        return False
    # 2D separating axes in the plane orthogonal to up
    e1 = a.forward
    e2 = np.cross(u, e1)

    def rect_of(c: Cuboid):
        ctr = np.array([c.center @ e1, c.center @ e2])
        ax = np.array([c.forward @ e1, c.forward @ e2])
        ax = ax / np.linalg.norm(ax)
        return ctr, ax, c.half_extents[:2]

    ca, axa, ha = rect_of(a)
    cb, axb, hb = rect_of(b)
    corners_a = np.array([ca + sx * axa * ha[0] + sy * np.array([-axa[1], axa[0]]) * ha[1]
                          for sx in (-1, 1) for sy in (-1, 1)])
    corners_b = np.array([cb + sx * axb * hb[0] + sy * np.array([-axb[1], axb[0]]) * hb[1]
                          for sx in (-1, 1) for sy in (-1, 1)])
    for axis in (axa, np.array([-axa[1], axa[0]]), axb, np.array([-axb[1], axb[0]])):
        pa = corners_a @ axis
        pb = corners_b @ axis
        if not _interval_overlap(pa.min(), pa.max(), pb.min(), pb.max()):
            return False
    return True


def ray_intersects_cuboid(origin: np.ndarray, direction: np.ndarray, c: Cuboid,
                          t_max: float = 1.0) -> bool:
    """Slab test; hit counts for parameters t in (0, t_max]."""
    q0 = c.to_body(np.asarray(origin, dtype=np.float64)[None, :])[0]
    qd = np.asarray(direction, dtype=np.float64) @ c.axes().T
    tmin, tmax = -np.inf, np.inf
    for i in range(3):
        if abs(qd[i]) < 1e-12:
            if abs(q0[i]) > c.half_extents[i]:
                return False
            continue
        t1 = (-c.half_extents[i] - q0[i]) / qd[i]
        t2 = (c.half_extents[i] - q0[i]) / qd[i]
        if t1 > t2:
            t1, t2 = t2, t1
        tmin = max(tmin, t1)
        tmax = min(tmax, t2)
        if tmin > tmax:
            return False
    return tmax > 0 and tmin <= t_max


def expand_to_enclose(base: Cuboid, target: Rect2, frame: FloorFrame) -> Cuboid:
    """Grow base's floor footprint (axis-aligned to base) to cover target.

    Vertical extent, up and forward are preserved.
    """
    r = cuboid_rect(base, frame)
    u = np.concatenate([[-r.half_extents[0], r.half_extents[0]],
                        (target.corners() - r.center) @ r.axis])
    v = np.concatenate([[-r.half_extents[1], r.half_extents[1]],
                        (target.corners() - r.center) @ r.perp])
    u_lo, u_hi = float(u.min()), float(u.max())
    v_lo, v_hi = float(v.min()), float(v.max())
    center2 = r.center + r.axis * (u_lo + u_hi) / 2.0 + r.perp * (v_lo + v_hi) / 2.0
    he2 = np.array([(u_hi - u_lo) / 2.0, (v_hi - v_lo) / 2.0])
    h_center = float(frame.height(base.center[None, :])[0])
    center3 = frame.to_3d(center2[None, :], h_center)[0]
    return Cuboid(center=center3, up=base.up, forward=base.forward,
                  half_extents=np.array([he2[0], he2[1], base.half_extents[2]]))


def extrude_bottom_to(c: Cuboid, bottom_height: float, floor: Plane) -> Cuboid:
    """Move the bottom face to the given height above the floor; top stays."""
    top = cuboid_top(c, floor)
    new_hz = max((top - bottom_height) / 2.0, MIN_EXTENT)
    center_h = bottom_height + new_hz
    h_now = float(floor.signed_distance(c.center[None, :])[0])
    center = c.center + (center_h - h_now) * floor.normal
    return Cuboid(center=center, up=c.up, forward=c.forward,
                  half_extents=np.array([c.half_extents[0], c.half_extents[1], new_hz]))


def cuboid_iou(a: Cuboid, b: Cuboid, frame: FloorFrame) -> float:
    """Volumetric IoU of two up-right boxes sharing the floor normal."""
    ra, rb = cuboid_rect(a, frame), cuboid_rect(b, frame)
    base = rect_intersection_area(ra, rb)
    za = (cuboid_bottom(a, frame.plane), cuboid_top(a, frame.plane))
    zb = (cuboid_bottom(b, frame.plane), cuboid_top(b, frame.plane))
    dz = max(0.0, min(za[1], zb[1]) - max(za[0], zb[0]))
    inter = base * dz
    union = a.volume() + b.volume() - inter
    return inter / union if union > 0 else 0.0
