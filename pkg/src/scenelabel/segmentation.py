"""Over-segmentation, scribble-driven object masks, cuboid-driven relabeling.

The initial segmentation runs a graph-based segmenter independently on the
color image and on a color-coded normal map, then intersects the two
labelings so the output boundaries are the union of both. Object selection
from user scribbles is a seeded classification over the segment adjacency
graph; the result is a union of whole segments by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage
from skimage.measure import label as cc_label
from skimage.segmentation import felzenszwalb

from .geometry import Plane, convex_hull_2d, fit_plane_ransac, Degenerate

if TYPE_CHECKING:  # pragma: no cover
    from .rgbd_io import RgbdFrame
    from .structure_graph import StructureGraph


class SegmentationError(Exception):
    pass


class NoForeground(SegmentationError):
    pass


@dataclass
class OversegConfig:
    color_scale: float = 300.0
    normal_scale: float = 200.0
    sigma: float = 0.8
    min_size: int = 50
    plane_iters: int = 60
    plane_tol: float = 0.015
    plane_points_cap: int = 1200
    rng_seed: int = 0
    depth_feature_weight: float = 0.5
    absorb_ratio: float = 0.8      # fraction of points inside to absorb
    absorb_inflate: float = 0.01   # cuboid inflation, meters


@dataclass
class Segment:
    """One region: pixels, back-projected points, fitted plane and normal."""

    id: int
    mask: np.ndarray                 # (H, W) bool
    points: np.ndarray               # (N, 3) valid 3D points, meters
    point_normals: np.ndarray        # (N, 3) per-point normals
    plane: Plane | None
    normal: np.ndarray | None        # plane normal oriented toward camera
    mean_color: np.ndarray           # (3,) in [0, 1]
    mean_depth: float
    label: str | None = None         # "floor" / "wall" / category / None

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())


@dataclass
class Segmentation:
    label_map: np.ndarray            # (H, W) int, segment ids
    segments: dict[int, Segment]

    def adjacency(self) -> dict[int, set[int]]:
        lm = self.label_map
        pairs = set()
        a, b = lm[:, :-1].ravel(), lm[:, 1:].ravel()
        horiz = a != b
        pairs.update(zip(a[horiz].tolist(), b[horiz].tolist()))
        a, b = lm[:-1, :].ravel(), lm[1:, :].ravel()
        vert = a != b
        pairs.update(zip(a[vert].tolist(), b[vert].tolist()))
        adj: dict[int, set[int]] = {sid: set() for sid in self.segments}
        for x, y in pairs:
            if x in adj and y in adj:
                adj[x].add(y)
                adj[y].add(x)
        return adj


@dataclass
class Scribble:
    pixels: np.ndarray               # (N, 2) int (row, col) polyline vertices
    kind: str                        # "foreground" | "background"

    def rasterize(self, shape: tuple[int, int]) -> np.ndarray:
        """Dense pixel set along the polyline."""
        pts = np.asarray(self.pixels, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise SegmentationError("scribble must contain pixels")
        out = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            n = int(np.max(np.abs(b - a))) + 1
            out.append(np.linspace(a, b, n + 1)[1:])
        dense = np.rint(np.vstack([np.atleast_2d(o) for o in out])).astype(int)
        h, w = shape
        if np.any(dense < 0) or np.any(dense[:, 0] >= h) or np.any(dense[:, 1] >= w):
            raise SegmentationError("scribble pixel out of bounds")
        return np.unique(dense, axis=0)


def compute_normals(frame: "RgbdFrame", window: int = 5):
    """Per-pixel least-squares plane normals oriented toward the camera.

    Returns (normals (H, W, 3), valid (H, W) bool). Pixels with invalid depth
    or fewer than 3 valid neighbors in the window are flagged invalid.
    """
    if window % 2 == 0 or window < 3:
        raise ValueError("window must be odd and >= 3")
    points, valid = frame.backproject()
    m = valid.astype(np.float64)
    w2 = float(window * window)

    def box(x):
        return ndimage.uniform_filter(x, size=window, mode="constant", cval=0.0) * w2

    cnt = box(m)
    p = points * m[..., None]
    s1 = np.stack([box(p[..., i]) for i in range(3)], axis=-1)
    s2 = np.empty(points.shape[:2] + (3, 3))
    for i in range(3):
        for j in range(i, 3):
            s2[..., i, j] = box(p[..., i] * points[..., j])
            s2[..., j, i] = s2[..., i, j]
    ok = valid & (cnt >= 3)
    cnt_safe = np.where(cnt > 0, cnt, 1.0)
    mu = s1 / cnt_safe[..., None]
    cov = s2 / cnt_safe[..., None, None] - mu[..., :, None] * mu[..., None, :]
    cov_flat = cov[ok]
    normals = np.zeros_like(points)
    if cov_flat.shape[0]:
        _, vecs = np.linalg.eigh(cov_flat)
        n = vecs[:, :, 0]
        # orient toward the camera: n . ray < 0
        dots = np.einsum("ij,ij->i", n, points[ok])
        n[dots > 0] *= -1.0
        normals[ok] = n
    return normals, ok


def normal_color_map(normals: np.ndarray, valid: np.ndarray) -> np.ndarray:
    img = (normals + 1.0) / 2.0
    img[~valid] = 0.0
    return img


def _merge_small_regions(labels: np.ndarray, color: np.ndarray, min_size: int) -> np.ndarray:
    """Merge regions below min_size into their most similar neighbor."""
    labels = labels.copy()
    flat_color = color.reshape(-1, 3)
    for _ in range(128):
        ids, inverse, counts = np.unique(labels, return_inverse=True,
                                         return_counts=True)
        inverse = inverse.ravel()
        small_mask = counts < min_size
        if not np.any(small_mask):
            break
        sums = np.zeros((len(ids), 3))
        for ch in range(3):
            sums[:, ch] = np.bincount(inverse, weights=flat_color[:, ch],
                                      minlength=len(ids))
        means = sums / counts[:, None]
        inv_img = inverse.reshape(labels.shape)
        pairs = []
        for a, b in ((inv_img[:, :-1], inv_img[:, 1:]),
                     (inv_img[:-1, :], inv_img[1:, :])):
            diff = a != b
            pairs.append(np.stack([a[diff], b[diff]], axis=1))
        pairs = np.vstack(pairs)
        pairs = np.vstack([pairs, pairs[:, ::-1]])
        pairs = np.unique(pairs, axis=0)
        # union-find so mutual merges cannot oscillate
        uf = np.arange(labels.max() + 1)

        def find(x):
            while uf[x] != x:
                uf[x] = uf[uf[x]]
                x = uf[x]
            return x

        changed = False
        for k in np.flatnonzero(small_mask):
            nbrs = pairs[pairs[:, 0] == k, 1]
            if nbrs.size == 0:
                continue
            d = np.linalg.norm(means[nbrs] - means[k], axis=1)
            order = np.lexsort((ids[nbrs], d))
            ra = find(int(ids[k]))
            rb = find(int(ids[nbrs[order[0]]]))
            if ra != rb:
                uf[ra] = rb
                changed = True
        if not changed:
            break
        lut = np.array([find(int(x)) for x in range(labels.max() + 1)])
        labels = lut[labels]
    return labels


def oversegment(frame: "RgbdFrame", normals: np.ndarray, valid: np.ndarray,
                cfg: OversegConfig | None = None) -> Segmentation:
    """Intersection of color-based and normal-based graph segmentations."""
    cfg = cfg or OversegConfig()
    color = frame.color.astype(np.float64) / 255.0
    nmap = normal_color_map(normals, valid)
    seg_c = felzenszwalb(color, scale=cfg.color_scale, sigma=cfg.sigma,
                         min_size=cfg.min_size)
    seg_n = felzenszwalb(nmap, scale=cfg.normal_scale, sigma=cfg.sigma,
                         min_size=cfg.min_size)
    combined = seg_c.astype(np.int64) * (seg_n.max() + 1) + seg_n
    labels = cc_label(combined, connectivity=1)
    labels = _merge_small_regions(labels, color, cfg.min_size)
    # compact ids in raster order for determinism
    ids, inverse = np.unique(labels, return_inverse=True)
    labels = inverse.reshape(labels.shape)

    points, pvalid = frame.backproject()
    segments: dict[int, Segment] = {}
    for sid in range(len(ids)):
        mask = labels == sid
        sel = mask & pvalid
        pts = points[sel]
        pns = normals[sel]  # zero rows where the normal is invalid
        plane = None
        pnormal = None
        if pts.shape[0] >= 3:
            sample = pts
            if sample.shape[0] > cfg.plane_points_cap:
                step = sample.shape[0] // cfg.plane_points_cap + 1
                sample = sample[::step]
            try:
                plane, _ = fit_plane_ransac(sample, iterations=cfg.plane_iters,
                                            inlier_tol=cfg.plane_tol,
                                            rng_seed=cfg.rng_seed + sid)
                pnormal = plane.normal.copy()
                centroid = pts.mean(axis=0)
                if float(pnormal @ centroid) > 0:  # orient toward camera
                    pnormal = -pnormal
                    plane = plane.flipped()
            except Degenerate:
                plane = None
        depth_vals = frame.depth[mask & (frame.depth > 0)]
        segments[sid] = Segment(
            id=sid, mask=mask, points=pts, point_normals=pns, plane=plane,
            normal=pnormal, mean_color=color[mask].reshape(-1, 3).mean(axis=0),
            mean_depth=float(depth_vals.mean()) if depth_vals.size else 0.0)
    return Segmentation(label_map=labels, segments=segments)


@dataclass
class ScribbleResult:
    mask: np.ndarray
    segment_ids: tuple[int, ...]
    warnings: tuple[str, ...] = ()


def scribble_segment(frame: "RgbdFrame", seg: Segmentation,
                     strokes: list[Scribble],
                     cfg: OversegConfig | None = None) -> ScribbleResult:
    """Turn foreground/background strokes into a segment-snapped object mask.

    Stroked segments are forced in/out (background wins conflicts); untouched
    segments join the foreground when their color+depth feature is closer to
    the foreground stroke statistics, then connectivity pruning keeps only
    components that touch a foreground stroke.
    """
    cfg = cfg or OversegConfig()
    fg_strokes = [s for s in strokes if s.kind == "foreground"]
    bg_strokes = [s for s in strokes if s.kind == "background"]
    if not fg_strokes:
        raise NoForeground("at least one foreground stroke required")
    shape = frame.depth.shape
    color = frame.color.astype(np.float64) / 255.0

    def stroke_pixels(group):
        if not group:
            return np.zeros((0, 2), dtype=int)
        return np.unique(np.vstack([s.rasterize(shape) for s in group]), axis=0)

    fg_px = stroke_pixels(fg_strokes)
    bg_px = stroke_pixels(bg_strokes)
    fg_ids = set(seg.label_map[fg_px[:, 0], fg_px[:, 1]].tolist())
    bg_ids = set(seg.label_map[bg_px[:, 0], bg_px[:, 1]].tolist()) if bg_px.size else set()
    warnings = []
    conflict = fg_ids & bg_ids
    if conflict:
        warnings.append(f"segments {sorted(conflict)} hit by both stroke kinds; background wins")
        fg_ids -= conflict

    w = cfg.depth_feature_weight

    def px_feature(px):
        cols = color[px[:, 0], px[:, 1]]
        depths = frame.depth[px[:, 0], px[:, 1]]
        dvals = depths[depths > 0]
        d = float(dvals.mean()) if dvals.size else 0.0
        return np.concatenate([cols.mean(axis=0), [w * d]])

    fg_stat = px_feature(fg_px)
    rest = ~np.isin(seg.label_map, sorted(fg_ids))
    rest_px = np.argwhere(rest)
    complement_stat = px_feature(rest_px) if rest_px.size else np.zeros(4)
    bg_stat = px_feature(bg_px) if bg_px.size else None

    selected = set(fg_ids)
    for sid, s in seg.segments.items():
        if sid in fg_ids or sid in bg_ids:
            continue
        feat = np.concatenate([s.mean_color, [w * s.mean_depth]])
        d_fg = np.linalg.norm(feat - fg_stat)
        if bg_stat is not None:
            if d_fg < np.linalg.norm(feat - bg_stat):
                selected.add(sid)
        else:
            # without background strokes, join only segments clearly similar
            # to the stroked foreground
            if d_fg < 0.5 * np.linalg.norm(fg_stat - complement_stat):
                selected.add(sid)
    # keep only components connected to a stroked foreground segment
    adj = seg.adjacency()
    keep: set[int] = set()
    frontier = sorted(fg_ids)
    seen = set(frontier)
    while frontier:
        nxt = []
        for sid in frontier:
            keep.add(sid)
            for nb in sorted(adj.get(sid, ())):
                if nb in selected and nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
        frontier = nxt
    mask = np.zeros(shape, dtype=bool)
    for sid in keep:
        mask |= seg.segments[sid].mask
    return ScribbleResult(mask=mask, segment_ids=tuple(sorted(keep)),
                          warnings=tuple(warnings))


def points_in_convex_polygon(points: np.ndarray, hull: np.ndarray) -> np.ndarray:
    """Inclusive point-in-polygon for a CCW convex hull; vectorized."""
    inside = np.ones(points.shape[0], dtype=bool)
    n = hull.shape[0]
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        e = b - a
        rel = points - a
        inside &= (e[0] * rel[:, 1] - e[1] * rel[:, 0]) >= -1e-9
    return inside


def refine_segments(graph: "StructureGraph", seg: Segmentation,
                    frame: "RgbdFrame", cfg: OversegConfig | None = None) -> None:
    """Re-own segments from refined cuboids (bottom-up level order).

    A segment under a node's projected hull is absorbed when at least
    ``absorb_ratio`` of its 3D points fall inside the node's cuboid inflated
    by ``absorb_inflate``; members failing the test are unlabeled. A segment
    belongs to at most one object: first owner in traversal order wins.
    """
    cfg = cfg or OversegConfig()
    order = [nid for level in reversed(graph.levels()) for nid in level]
    prev_members = {nid: set(graph.nodes[nid].segment_ids) for nid in order}
    pix_uv = {sid: np.argwhere(s.mask)[:, ::-1].astype(np.float64)
              for sid, s in seg.segments.items()}
    owner: dict[int, int] = {}
    for nid in order:
        node = graph.nodes[nid]
        cub = node.cuboid
        try:
            hull = convex_hull_2d(frame.project(cub.corners()))
        except Degenerate:
            continue
        lo, hi = hull.min(axis=0), hull.max(axis=0)
        inflated_he = cub.half_extents + cfg.absorb_inflate
        touched = set()
        for sid, s in seg.segments.items():
            uv = pix_uv[sid]
            if uv.shape[0] == 0:
                continue
            if np.any(uv.max(axis=0) < lo) or np.any(uv.min(axis=0) > hi):
                continue
            if np.any(points_in_convex_polygon(uv, hull)):
                touched.add(sid)
        for sid in sorted(touched | prev_members[nid]):
            if sid in owner:
                continue
            s = seg.segments[sid]
            if s.points.shape[0] == 0:
                continue
            q = np.abs(cub.to_body(s.points))
            if float(np.mean(np.all(q <= inflated_he, axis=1))) >= cfg.absorb_ratio:
                owner[sid] = nid
    dropped = set().union(*prev_members.values()) if prev_members else set()
    for nid in order:
        graph.nodes[nid].segment_ids = tuple(
            sorted(sid for sid, o in owner.items() if o == nid))
    for sid, s in seg.segments.items():
        if sid in owner:
            s.label = graph.nodes[owner[sid]].label
        elif sid in dropped:
            s.label = None
