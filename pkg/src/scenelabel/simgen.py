"""Synthetic bedroom generator: ray-cast RGBD frames with exact ground truth.

Scenes are a floor patch, two orthogonal walls, and category-typical boxes
placed to honor each category's wall/support habits. The renderer is the
oracle: depth is the exact ray cast, masks are the per-pixel winner, and the
ground-truth graph comes from the placement itself.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Cuboid, FloorFrame, Plane, convex_hull_2d, cuboid_rect, polygon_area,
)
from .rgbd_io import AnnotationRecord, ObjectAnnotation, RgbdFrame, encode_rle
from .scene_parse import ParseConfig, RoomLayout
from .structure_graph import FLOOR_ID, SGNode, StructureGraph, compute_wall_flags


class PlacementFailure(Exception):
    pass


DEFAULT_CATEGORIES = ["bed", "sofa", "dresser", "night stand", "desk", "chair",
                      "bookshelf", "lamp", "pillow"]

# nominal (width, depth, height) in meters plus placement habits
CATEGORY_SHAPES: dict[str, dict] = {
    "bed":         {"size": (1.9, 1.6, 0.5), "wall": True, "on": None},
    "sofa":        {"size": (1.8, 0.85, 0.8), "wall": True, "on": None},
    "dresser":     {"size": (1.2, 0.5, 1.3), "wall": True, "on": None},
    "night stand": {"size": (0.5, 0.45, 0.6), "wall": True, "on": None},
    "desk":        {"size": (1.3, 0.65, 0.75), "wall": True, "on": None},
    "chair":       {"size": (0.5, 0.5, 0.95), "wall": False, "on": None},
    "bookshelf":   {"size": (0.9, 0.32, 1.9), "wall": True, "on": None},
    "lamp":        {"size": (0.35, 0.35, 0.5), "wall": False,
                    "on": ["night stand", "desk", "dresser"]},
    "pillow":      {"size": (0.6, 0.4, 0.18), "wall": False, "on": ["bed", "sofa"]},
}

DEFAULT_SIZE_SPEC = {
    cat: [(round(s["size"][0] * s["size"][1], 4), s["size"][2])]
    for cat, s in CATEGORY_SHAPES.items()
}

ENRICHMENT_SCHEMA = "enrichment/1"


def save_size_spec(spec: dict, path) -> None:
    with open(path, "w") as f:
        json.dump({"schema": ENRICHMENT_SCHEMA,
                   "categories": {k: [list(x) for x in v]
                                  for k, v in sorted(spec.items())}}, f, indent=1)


def load_size_spec(path) -> dict:
    with open(path) as f:
        d = json.load(f)
    if d.get("schema") != ENRICHMENT_SCHEMA:
        raise ValueError(f"expected {ENRICHMENT_SCHEMA}, got {d.get('schema')}")
    return {k: [tuple(x) for x in v] for k, v in d["categories"].items()}


@dataclass(frozen=True)
class GenParams:
    width: int = 320
    height: int = 240
    fov_deg: float = 62.0
    count_range: tuple[int, int] = (2, 8)
    occlusion_rate: float = 0.0   # chance to accept an image-space overlap
    depth_noise: float = 0.0      # sigma = depth_noise * z^2, meters
    room: tuple[float, float, float] = (4.6, 4.6, 2.7)
    categories: tuple[str, ...] = tuple(DEFAULT_CATEGORIES)
    support_bias: float = 0.45    # chance to stack when a supporter exists
    max_tries: int = 80
    min_mask_px: int = 60


@dataclass
class CameraPose:
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pos: np.ndarray
    rotation: np.ndarray  # world->cam, rows = (right, down, forward)

    @staticmethod
    def looking_at(width, height, fov_deg, pos, look_at) -> "CameraPose":
        pos = np.asarray(pos, dtype=np.float64)
        fwd = np.asarray(look_at, dtype=np.float64) - pos
        fwd /= np.linalg.norm(fwd)
        world_up = np.array([0.0, 0.0, 1.0])
        right = np.cross(fwd, world_up)
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        fx = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return CameraPose(width=width, height=height, fx=fx, fy=fx,
                          cx=width / 2.0, cy=height / 2.0, pos=pos,
                          rotation=np.stack([right, down, fwd]))

    def to_cam_point(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ (np.asarray(p, dtype=np.float64) - self.pos)

    def to_cam_dir(self, d: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=np.float64)

    def cuboid_to_cam(self, c: Cuboid) -> Cuboid:
        return Cuboid(self.to_cam_point(c.center), self.to_cam_dir(c.up),
                      self.to_cam_dir(c.forward), c.half_extents.copy())


FLOOR_COLOR = (112, 92, 72)
WALL_COLORS = ((204, 202, 192), (174, 184, 202))


def object_palette(n: int) -> list[tuple[int, int, int]]:
    out = []
    for k in range(n):
        h = (k * 0.381966) % 1.0
        r, g, b = colorsys.hsv_to_rgb(h, 0.65, 0.75)
        out.append((int(r * 255), int(g * 255), int(b * 255)))
    return out


def render(camera: CameraPose, room: tuple[float, float, float],
           boxes: list[Cuboid], noise: float = 0.0,
           rng: np.random.Generator | None = None):
    """Exact ray cast. Returns (frame, hit_id) with hit ids: -1 floor,
    -2/-3 walls, k >= 0 the k-th box, -10 no hit."""
    h, w = camera.height, camera.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    dirs_cam = np.stack([(us - camera.cx) / camera.fx,
                         (vs - camera.cy) / camera.fy,
                         np.ones_like(us)], axis=-1)
    dirs_w = dirs_cam @ camera.rotation  # row-vector form of R^T d

    t_best = np.full((h, w), np.inf)
    hit_id = np.full((h, w), -10, dtype=int)

    def consider(t, mask, ident):
        nonlocal t_best, hit_id
        better = mask & (t < t_best - 1e-12)
        t_best = np.where(better, t, t_best)
        hit_id = np.where(better, ident, hit_id)

    o = camera.pos
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis, ident, bound_checks in (
                (2, -1, lambda p: (p[..., 0] >= 0) & (p[..., 0] <= room[0])
                 & (p[..., 1] >= 0) & (p[..., 1] <= room[1])),
                (0, -2, lambda p: (p[..., 1] >= 0) & (p[..., 1] <= room[1])
                 & (p[..., 2] >= 0) & (p[..., 2] <= room[2])),
                (1, -3, lambda p: (p[..., 0] >= 0) & (p[..., 0] <= room[0])
                 & (p[..., 2] >= 0) & (p[..., 2] <= room[2]))):
            d = dirs_w[..., axis]
            t = np.where(np.abs(d) > 1e-12, -o[axis] / d, np.inf)
            p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs_w
            ok = np.isfinite(t) & (t > 0.05) & bound_checks(p)
            consider(np.where(ok, t, np.inf), ok, ident)

        for k, box in enumerate(boxes):
            q0 = box.to_body(o[None, :])[0]
            qd = dirs_w @ box.axes().T
            t1 = (-box.half_extents - q0) / qd
            t2 = (box.half_extents - q0) / qd
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            par = np.abs(qd) < 1e-12
            inside = np.abs(q0) <= box.half_extents
            lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
            tmin = lo.max(axis=-1)
            tmax = hi.min(axis=-1)
            hit = (tmin <= tmax) & (tmax > 0.05)
            tval = np.where(tmin > 0.05, tmin, tmax)
            consider(np.where(hit, tval, np.inf), hit, k)

    depth = np.where(np.isfinite(t_best), t_best, 0.0)
    if noise > 0.0 and rng is not None:
        depth = np.where(depth > 0,
                         np.maximum(0.05, depth + rng.normal(0.0, 1.0, depth.shape)
                                    * noise * depth ** 2), 0.0)
    color = np.zeros((h, w, 3), dtype=np.uint8)
    color[hit_id == -1] = FLOOR_COLOR
    color[hit_id == -2] = WALL_COLORS[0]
    color[hit_id == -3] = WALL_COLORS[1]
    palette = object_palette(len(boxes))
    for k in range(len(boxes)):
        color[hit_id == k] = palette[k]
    gravity_cam = camera.rotation @ np.array([0.0, 0.0, -1.0])
    frame = RgbdFrame(color=color, depth=depth, fx=camera.fx, fy=camera.fy,
                      cx=camera.cx, cy=camera.cy, gravity=gravity_cam,
                      frame_id="synthetic")
    return frame, hit_id


@dataclass
class SyntheticScene:
    frame: RgbdFrame
    masks: list[np.ndarray]
    labels: list[str]
    gt_graph: StructureGraph
    gt_layout: RoomLayout
    gt_record: AnnotationRecord
    world_boxes: list[Cuboid]
    camera: CameraPose
    seed: int
    params: GenParams


def _world_box(cx, cy, z_bottom, sx, sy, sz, yaw) -> Cuboid:
    fw = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    return Cuboid(np.array([cx, cy, z_bottom + sz / 2.0]),
                  np.array([0.0, 0.0, 1.0]), fw,
                  np.array([sx / 2.0, sy / 2.0, sz / 2.0]))


def _footprint_poly(box: Cuboid) -> np.ndarray:
    fw = box.forward[:2]
    side = np.array([-fw[1], fw[0]])
    c = box.center[:2]
    return np.array([c + sx * fw * box.half_extents[0] + sy * side * box.half_extents[1]
                     for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1))])


def _convex_overlap_area(pa: np.ndarray, pb: np.ndarray) -> float:
    """Intersection area of two convex polygons (any vertex order)."""
    from .geometry import clip_polygon_halfplane
    poly = pa
    centroid = pb.mean(axis=0)
    n = pb.shape[0]
    for i in range(n):
        p, q = pb[i], pb[(i + 1) % n]
        e = q - p
        normal = np.array([e[1], -e[0]])
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            continue
        normal /= norm
        if float(normal @ (centroid - p)) > 0:
            normal = -normal
        poly = clip_polygon_halfplane(poly, normal, float(normal @ p))
        if poly.shape[0] == 0:
            return 0.0
    return polygon_area(poly) if poly.shape[0] >= 3 else 0.0


def _polys_overlap(pa: np.ndarray, pb: np.ndarray, margin: float) -> bool:
    grown = pb.mean(axis=0) + (pb - pb.mean(axis=0)) * (1.0 + margin)
    return _convex_overlap_area(pa, grown) > 1e-9


def _projected_hull(camera: CameraPose, box: Cuboid) -> np.ndarray | None:
    corners_cam = np.array([camera.to_cam_point(c) for c in box.corners()])
    if np.any(corners_cam[:, 2] < 0.05):
        return None
    u = camera.fx * corners_cam[:, 0] / corners_cam[:, 2] + camera.cx
    v = camera.fy * corners_cam[:, 1] / corners_cam[:, 2] + camera.cy
    try:
        return convex_hull_2d(np.column_stack([u, v]))
    except Exception:
        return None


def generate_scene(params: GenParams, seed: int,
                   explicit_boxes: list[tuple[str, Cuboid, int]] | None = None,
                   camera: CameraPose | None = None) -> SyntheticScene:
    """Sample and render one scene. ``explicit_boxes`` bypasses placement:
    a list of (label, world cuboid, parent index or FLOOR_ID)."""
    rng = np.random.default_rng(seed)
    room = params.room
    if camera is None:
        pos = (room[0] - rng.uniform(0.35, 0.8), room[1] - rng.uniform(0.35, 0.8),
               rng.uniform(1.35, 1.65))
        look = (rng.uniform(1.0, 1.6), rng.uniform(1.0, 1.6),
                rng.uniform(0.4, 0.8))
        camera = CameraPose.looking_at(params.width, params.height,
                                       params.fov_deg, pos, look)

    if explicit_boxes is not None:
        placed = [(lbl, box, par) for lbl, box, par in explicit_boxes]
        boxes = [b for _, b, _ in placed]
        frame, hit_id = render(camera, room, boxes, noise=params.depth_noise,
                               rng=rng)
    else:
        # retry placements whose render leaves an object nearly invisible
        for attempt in range(8):
            sub = np.random.default_rng((seed, attempt))
            placed = _place_objects(params, sub, camera)
            boxes = [b for _, b, _ in placed]
            frame, hit_id = render(camera, room, boxes,
                                   noise=params.depth_noise, rng=sub)
            visible = [(hit_id == k).sum() >= params.min_mask_px
                       for k in range(len(boxes))]
            if all(visible):
                break
        else:
            raise PlacementFailure("no placement kept every object visible")
    frame.frame_id = f"synth-{seed}"
    masks = [hit_id == k for k in range(len(boxes))]

    floor_cam = _plane_to_cam(Plane(np.array([0.0, 0.0, 1.0]), 0.0), camera)
    wall_cams = [_plane_to_cam(Plane(np.array([1.0, 0.0, 0.0]), 0.0), camera),
                 _plane_to_cam(Plane(np.array([0.0, 1.0, 0.0]), 0.0), camera)]
    gt_frame = FloorFrame.from_plane(floor_cam, wall_normal=wall_cams[0].normal)
    gt_layout = RoomLayout(floor=floor_cam, floor_segments=(), walls=wall_cams,
                           wall_segments=[(), ()], frame=gt_frame)
    pcfg = ParseConfig()
    nodes = []
    for k, (label, box, _) in enumerate(placed):
        cam_box = camera.cuboid_to_cam(box)
        n = SGNode(id=k, cuboid=cam_box, label=label)
        n.rect = cuboid_rect(cam_box, gt_frame)
        n.wall_contact, n.wall_align = compute_wall_flags(cam_box, gt_layout, pcfg)
        nodes.append(n)
    edges = {(par, k) for k, (_, _, par) in enumerate(placed)}
    gt_graph = StructureGraph(nodes={n.id: n for n in nodes}, edges=edges)

    record = AnnotationRecord(
        frame_id=frame.frame_id, image_size=frame.depth.shape,
        floor=floor_cam.to_dict(), walls=[w.to_dict() for w in wall_cams],
        objects=[ObjectAnnotation(id=k, label=placed[k][0],
                                  mask_rle=encode_rle(masks[k]),
                                  cuboid=nodes[k].cuboid.to_dict(),
                                  wall_contact=nodes[k].wall_contact,
                                  wall_align=nodes[k].wall_align)
                 for k in range(len(placed))],
        edges=sorted(edges))
    return SyntheticScene(frame=frame, masks=masks,
                          labels=[lbl for lbl, _, _ in placed],
                          gt_graph=gt_graph, gt_layout=gt_layout,
                          gt_record=record, world_boxes=boxes, camera=camera,
                          seed=seed, params=params)


def _plane_to_cam(plane: Plane, camera: CameraPose) -> Plane:
    n_cam = camera.to_cam_dir(plane.normal)
    # a point on the world plane, transformed
    p0 = -plane.offset * plane.normal
    p_cam = camera.to_cam_point(p0)
    return Plane(n_cam, -float(n_cam @ p_cam))


def _place_objects(params: GenParams, rng: np.random.Generator,
                   camera: CameraPose):
    room = params.room
    lo, hi = params.count_range
    n = int(rng.integers(lo, hi + 1))
    cats = [c for c in params.categories if c in CATEGORY_SHAPES]
    floor_cats = [c for c in cats if CATEGORY_SHAPES[c]["on"] is None]
    placed: list[tuple[str, Cuboid, int]] = []
    hulls: list[np.ndarray | None] = []

    for k in range(n):
        ok = False
        for _ in range(params.max_tries):
            supporters = [(i, c) for c in cats if CATEGORY_SHAPES[c]["on"]
                          for i, (pl, pb, pp) in enumerate(placed)
                          if pl in CATEGORY_SHAPES[c]["on"]]
            occluded = False
            if placed and rng.random() < params.occlusion_rate:
                res = _sample_occluded(floor_cats, placed, room, camera, rng)
                if res is None:
                    continue
                cat, box = res
                parent = FLOOR_ID
                occluded = True
            elif supporters and rng.random() < params.support_bias:
                idx = int(rng.integers(len(supporters)))
                parent_i, cat = supporters[idx]
                box = _sample_on_parent(cat, placed[parent_i][1], rng)
                parent = parent_i
            else:
                cat = floor_cats[int(rng.integers(len(floor_cats)))]
                box = _sample_on_floor(cat, room, rng)
                parent = FLOOR_ID
            if box is None:
                continue
            if not _placement_valid(box, parent, placed, hulls, camera, params,
                                    rng, allow_image_overlap=occluded):
                continue
            placed.append((cat, box, parent))
            hulls.append(_projected_hull(camera, box))
            ok = True
            break
        if not ok:
            if len(placed) >= lo:
                break
            raise PlacementFailure(
                f"could not place object {k + 1}/{n} after {params.max_tries} tries")
    return placed


def _sample_occluded(floor_cats, placed, room, camera, rng):
    """Place a tall floor object behind a lower one so its base is hidden."""
    lows = [(i, b) for i, (_, b, p) in enumerate(placed)
            if p == FLOOR_ID and b.center[2] + b.half_extents[2] <= 1.0]
    if not lows:
        return None
    _, occluder = lows[int(rng.integers(len(lows)))]
    h_cut = occluder.center[2] + occluder.half_extents[2]
    tall_cats = [c for c in floor_cats
                 if CATEGORY_SHAPES[c]["size"][2] >= h_cut + 0.35]
    if not tall_cats:
        return None
    cat = tall_cats[int(rng.integers(len(tall_cats)))]
    w, d, h = _jitter_size(cat, rng)
    ray = occluder.center[:2] - camera.pos[:2]
    norm = np.linalg.norm(ray)
    if norm < 1e-6:
        return None
    ray /= norm
    dist = rng.uniform(0.55, 1.3)
    cx, cy = occluder.center[:2] + ray * (occluder.half_extents[:2].max() + dist)
    if not (0.3 < cx < room[0] - 0.3 and 0.3 < cy < room[1] - 0.3):
        return None
    yaw = rng.uniform(0.0, math.pi)
    return cat, _world_box(cx, cy, 0.0, w, d, h, yaw)


def _jitter_size(cat: str, rng) -> tuple[float, float, float]:
    w, d, h = CATEGORY_SHAPES[cat]["size"]
    return (w * rng.uniform(0.88, 1.12), d * rng.uniform(0.88, 1.12),
            h * rng.uniform(0.9, 1.1))


def _sample_on_floor(cat: str, room, rng) -> Cuboid | None:
    w, d, h = _jitter_size(cat, rng)
    if CATEGORY_SHAPES[cat]["wall"]:
        wall = int(rng.integers(2))  # 0: x=0 wall, 1: y=0 wall
        gap = rng.uniform(0.0, 0.09)
        yaw_off = math.radians(rng.uniform(-2.5, 2.5))
        along = room[1 - wall]
        if along - 0.8 <= 0.6:
            return None  # room too small along the wall
        if wall == 0:
            # back face toward x=0: forward along x
            cx = gap + d / 2.0
            cy = rng.uniform(0.6, along - 0.8)
            yaw = yaw_off
            return _world_box(cx, cy, 0.0, d, w, h, yaw)
        cy = gap + d / 2.0
        cx = rng.uniform(0.6, along - 0.8)
        yaw = math.pi / 2.0 + yaw_off
        return _world_box(cx, cy, 0.0, d, w, h, yaw)
    if room[0] - 1.2 <= 0.7 or room[1] - 1.2 <= 0.7:
        return None
    cx = rng.uniform(0.7, room[0] - 1.2)
    cy = rng.uniform(0.7, room[1] - 1.2)
    yaw = rng.uniform(0.0, math.pi)
    return _world_box(cx, cy, 0.0, w, d, h, yaw)


def _sample_on_parent(cat: str, parent: Cuboid, rng) -> Cuboid | None:
    w, d, h = _jitter_size(cat, rng)
    phe = parent.half_extents
    slack_u = phe[0] - w / 2.0 - 0.02
    slack_v = phe[1] - d / 2.0 - 0.02
    if slack_u <= 0 or slack_v <= 0:
        return None
    u = rng.uniform(-slack_u, slack_u)
    v = rng.uniform(-slack_v, slack_v)
    center = (parent.center + u * parent.forward + v * parent.side)
    z_top = parent.center[2] + phe[2]
    yaw_p = math.atan2(parent.forward[1], parent.forward[0])
    yaw = yaw_p + math.radians(rng.uniform(-8, 8))
    return _world_box(center[0], center[1], z_top, w, d, h, yaw)


def _placement_valid(box, parent, placed, hulls, camera, params, rng,
                     allow_image_overlap=False) -> bool:
    room = params.room
    fp = _footprint_poly(box)
    if np.any(fp < -1e-6) or np.any(fp[:, 0] > room[0]) or np.any(fp[:, 1] > room[1]):
        return False
    top = box.center[2] + box.half_extents[2]
    if top > room[2] - 0.2:
        return False
    # floor-rect separation from unrelated objects
    for i, (_, other, _) in enumerate(placed):
        if parent == i:
            continue
        if _polys_overlap(fp, _footprint_poly(other), margin=0.05):
            return False
    hull = _projected_hull(camera, box)
    if hull is None:
        return False
    h, w = params.height, params.width
    if (hull[:, 0].min() < 4 or hull[:, 0].max() > w - 4
            or hull[:, 1].min() < 4 or hull[:, 1].max() > h - 4):
        return False
    if not allow_image_overlap:
        for i, other_hull in enumerate(hulls):
            if other_hull is None or parent == i:
                continue
            if _hulls_overlap(hull, other_hull):
                return False
    return True


def _hulls_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    return _convex_overlap_area(a, b) > 1.0  # more than a pixel of overlap
