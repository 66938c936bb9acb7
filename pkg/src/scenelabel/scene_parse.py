"""Room layout extraction and per-object cuboid fitting.

The layout is a floor plane found from gravity plus up to two orthogonal
walls scored over candidate normal pairs; every object mask then yields one
up-right cuboid whose yaw comes from the dominant boundary line of the
floor-projected points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Cuboid, Degenerate, FloorFrame, Plane, convex_hull_2d, fit_line_ransac,
    fit_plane_ransac, fit_upright_obb, point_plane_distance,
)
from .segmentation import Segment, Segmentation

log = logging.getLogger(__name__)


class ParseError(Exception):
    pass


class NoFloor(ParseError):
    pass


class TooFewPoints(ParseError):
    pass


@dataclass
class ParseConfig:
    a_t_deg: float = 30.0          # angular tolerance
    d_t: float = 0.15              # distance tolerance, meters
    min_wall_points: int = 2000    # wall candidacy cutoff
    hull_band: float = 0.02        # boundary gather band, meters
    min_obb_points: int = 10
    lowest_percentile: float = 5.0
    plane_iters: int = 500
    plane_tol: float = 0.015
    line_iters: int = 300
    line_tol: float = 0.02
    rng_seed: int = 0

    @property
    def cos_parallel(self) -> float:
        return float(np.cos(np.radians(self.a_t_deg)))

    @property
    def sin_orthogonal(self) -> float:
        return float(np.sin(np.radians(self.a_t_deg)))


@dataclass
class RoomLayout:
    floor: Plane
    floor_segments: tuple[int, ...]
    walls: list[Plane]
    wall_segments: list[tuple[int, ...]]
    frame: FloorFrame
    warnings: tuple[str, ...] = ()

    @property
    def floor_up(self) -> np.ndarray:
        return self.floor.normal


def coplanar(s_i: Segment, s_j: Segment, cfg: ParseConfig) -> bool:
    """Parallel within a_T and within d_T of each other's plane."""
    if s_i.plane is None or s_j.plane is None:
        return False
    if abs(float(s_i.normal @ s_j.normal)) < cfg.cos_parallel:
        return False
    d = min(point_plane_distance(s_i.points, s_j.plane),
            point_plane_distance(s_j.points, s_i.plane))
    return d <= cfg.d_t


def _grow_coplanar(seed_ids: list[int], segments: dict[int, Segment],
                   exclude: set[int], cfg: ParseConfig, seed_offset: int,
                   trace: list | None = None) -> tuple[Plane, set[int]]:
    """Merge coplanar segments around a seed, refitting the joint plane by
    RANSAC every round until fixpoint. The merged set only grows."""
    merged = set(seed_ids)
    pts = np.vstack([segments[i].points for i in seed_ids])
    plane, _ = fit_plane_ransac(pts, iterations=cfg.plane_iters,
                                inlier_tol=cfg.plane_tol,
                                rng_seed=cfg.rng_seed + seed_offset)
    rounds = 0
    while True:
        added = []
        for sid in sorted(segments):
            if sid in merged or sid in exclude:
                continue
            s = segments[sid]
            if s.plane is None:
                continue
            if abs(float(s.normal @ plane.normal)) < cfg.cos_parallel:
                continue
            d = min(point_plane_distance(s.points, plane),
                    float(np.min(np.abs(s.plane.signed_distance(pts)))))
            if d <= cfg.d_t:
                added.append(sid)
        if not added:
            break
        merged.update(added)
        pts = np.vstack([pts] + [segments[i].points for i in added])
        rounds += 1
        plane, _ = fit_plane_ransac(pts, iterations=cfg.plane_iters,
                                    inlier_tol=cfg.plane_tol,
                                    rng_seed=cfg.rng_seed + seed_offset + rounds)
        if trace is not None:
            trace.append(set(merged))
    return plane, merged


def extract_floor(seg: Segmentation, gravity: np.ndarray, cfg: ParseConfig,
                  seed_id: int | None = None, trace: list | None = None):
    """Find the floor: gravity-orthogonal seed at the lowest boundary, grown
    by coplanar merging. Returns (floor Plane with normal pointing up,
    floor segment ids)."""
    up = -np.asarray(gravity, dtype=np.float64)
    segments = seg.segments
    if seed_id is None:
        best = None
        for sid in sorted(segments):
            s = segments[sid]
            if s.plane is None:
                continue
            if float(s.normal @ up) < cfg.cos_parallel:
                continue
            h = float(np.percentile(s.points @ up, cfg.lowest_percentile))
            if best is None or h < best[0]:
                best = (h, sid)
        if best is None:
            raise NoFloor("no segment orthogonal to gravity")
        seed_id = best[1]
    elif segments[seed_id].plane is None:
        raise NoFloor(f"seed segment {seed_id} has no fitted plane")
    plane, merged = _grow_coplanar([seed_id], segments, set(), cfg,
                                   seed_offset=1, trace=trace)
    if float(plane.normal @ up) < 0:
        plane = plane.flipped()
    for sid in merged:
        segments[sid].label = "floor"
    return plane, tuple(sorted(merged))


def score_wall_pair(n1: np.ndarray, n2: np.ndarray,
                    point_normals: np.ndarray) -> float:
    """Candidate wall-pair score: sum over both normals of
    exp(-(n_p . n_i)^2) across all candidate point normals."""
    total = 0.0
    for n in (n1, n2):
        total += float(np.sum(np.exp(-np.square(point_normals @ n))))
    return total


def _wall_like(seg: Segmentation, floor_normal: np.ndarray,
               exclude: set[int], cfg: ParseConfig) -> list[int]:
    out = []
    for sid in sorted(seg.segments):
        if sid in exclude:
            continue
        s = seg.segments[sid]
        if s.plane is None or s.points.shape[0] < cfg.min_wall_points:
            continue
        if abs(float(s.normal @ floor_normal)) <= cfg.sin_orthogonal:
            out.append(sid)
    return out


def extract_walls(seg: Segmentation, floor: Plane, floor_ids: tuple[int, ...],
                  cfg: ParseConfig, seed_ids: list[int] | None = None):
    """Pick the best-scoring orthogonal wall normal pair and grow both seeds.

    Falls back to the single best wall when no orthogonal pair exists, and to
    zero walls (with a warning) when nothing wall-like is present.
    Returns (wall planes, per-wall segment ids, warnings).
    """
    warnings: list[str] = []
    exclude = set(floor_ids)
    candidates = seed_ids if seed_ids is not None else _wall_like(
        seg, floor.normal, exclude, cfg)
    if not candidates:
        return [], [], ("no wall-like segments; layout has zero walls",)
    all_pts = np.vstack([seg.segments[i].points for i in candidates])
    all_normals = np.vstack([seg.segments[i].point_normals for i in candidates])
    keep = np.linalg.norm(all_normals, axis=1) > 0.5
    all_normals = all_normals[keep]

    pair_best = None
    for ai in range(len(candidates)):
        for bi in range(ai + 1, len(candidates)):
            na = seg.segments[candidates[ai]].normal
            nb = seg.segments[candidates[bi]].normal
            if abs(float(na @ nb)) > cfg.sin_orthogonal:
                continue
            score = score_wall_pair(na, nb, all_normals)
            key = (candidates[ai], candidates[bi])
            if pair_best is None or score > pair_best[0] + 1e-9 or (
                    abs(score - pair_best[0]) <= 1e-9 and key < pair_best[1]):
                pair_best = (score, key)
    if pair_best is None:
        max_size = max(seg.segments[i].points.shape[0] for i in candidates)
        best_id = min(i for i in candidates
                      if seg.segments[i].points.shape[0] == max_size)
        seeds = [best_id]
        warnings.append("no orthogonal wall pair; single-wall fallback")
    else:
        seeds = list(pair_best[1])

    walls: list[Plane] = []
    wall_ids: list[tuple[int, ...]] = []
    grown: set[int] = set()
    for k, sid in enumerate(seeds):
        plane, merged = _grow_coplanar([sid], seg.segments,
                                       exclude | grown, cfg, seed_offset=100 + k)
        if plane.signed_distance(np.zeros((1, 3)))[0] < 0:
            plane = plane.flipped()  # normal faces the camera side
        for m in merged:
            seg.segments[m].label = "wall"
        walls.append(plane)
        wall_ids.append(tuple(sorted(merged)))
        grown |= merged
    return walls, wall_ids, tuple(warnings)


def fit_object_cuboid(points: np.ndarray, point_normals: np.ndarray,
                      floor: Plane, cfg: ParseConfig,
                      rng_seed: int = 0) -> Cuboid:
    """Fit an up-right box: yaw from the dominant boundary line of the
    floor-projected points (horizontal-surface points excluded), extents from
    the smallest enclosing box in that frame."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 3:
        raise TooFewPoints(f"object mask has {points.shape[0]} 3D points")
    frame = FloorFrame.from_plane(floor)
    vertical = np.abs(point_normals @ floor.normal) < cfg.cos_parallel
    qualifying = points[vertical]
    if qualifying.shape[0] < cfg.min_obb_points:
        log.warning("only %d non-horizontal points; using all %d",
                    qualifying.shape[0], points.shape[0])
        qualifying = points
    p2 = frame.to_2d(qualifying)
    forward2 = None
    try:
        hull = convex_hull_2d(p2)
        band = _hull_boundary_points(p2, hull, cfg.hull_band)
        forward2 = fit_line_ransac(band, iterations=cfg.line_iters,
                                   inlier_tol=cfg.line_tol, rng_seed=rng_seed)
    except Degenerate:
        centered = p2 - p2.mean(axis=0)
        _, s, vt = np.linalg.svd(centered, full_matrices=False)
        forward2 = vt[0] if s[0] > 1e-9 else np.array([1.0, 0.0])
    # box axis is the perpendicular of the dominant boundary line
    perp2 = np.array([-forward2[1], forward2[0]])
    forward3 = perp2[0] * frame.e1 + perp2[1] * frame.e2
    return fit_upright_obb(points, floor.normal, forward3)


def _hull_boundary_points(p2: np.ndarray, hull: np.ndarray, band: float) -> np.ndarray:
    dmin = np.full(p2.shape[0], np.inf)
    n = hull.shape[0]
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip((p2 - a) @ ab / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        dmin = np.minimum(dmin, np.linalg.norm(p2 - proj, axis=1))
    sel = p2[dmin <= band]
    return sel if sel.shape[0] >= 2 else p2


@dataclass
class ParsedScene:
    layout: RoomLayout
    cuboids: list[Cuboid]
    object_points: list[np.ndarray]
    object_normals: list[np.ndarray]
    warnings: tuple[str, ...] = ()


def parse_scene(frame, seg: Segmentation, normals: np.ndarray,
                object_masks: list[np.ndarray], cfg: ParseConfig | None = None,
                floor_seed: int | None = None,
                wall_seeds: list[int] | None = None) -> ParsedScene:
    """Full layout + cuboid parse; one cuboid per object mask."""
    cfg = cfg or ParseConfig()
    floor, floor_ids = extract_floor(seg, frame.gravity, cfg, seed_id=floor_seed)
    walls, wall_ids, warnings = extract_walls(seg, floor, floor_ids, cfg,
                                              seed_ids=wall_seeds)
    layout_frame = FloorFrame.from_plane(
        floor, wall_normal=walls[0].normal if walls else None)
    layout = RoomLayout(floor=floor, floor_segments=floor_ids, walls=walls,
                        wall_segments=wall_ids, frame=layout_frame,
                        warnings=warnings)
    points, valid = frame.backproject()
    cuboids = []
    obj_points = []
    obj_normals = []
    for k, mask in enumerate(object_masks):
        sel = mask & valid
        pts = points[sel]
        pns = normals[sel]
        cuboids.append(fit_object_cuboid(pts, pns, floor, cfg,
                                         rng_seed=cfg.rng_seed + 7000 + k))
        obj_points.append(pts)
        obj_normals.append(pns)
    return ParsedScene(layout=layout, cuboids=cuboids, object_points=obj_points,
                       object_normals=obj_normals, warnings=warnings)
