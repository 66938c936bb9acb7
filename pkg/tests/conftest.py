"""Shared synthetic-frame fixtures built without the scene generator so the
low-level modules can be tested before it exists."""

import numpy as np
import pytest

from scenelabel.rgbd_io import RgbdFrame


def frame_from_depth(depth, color=None, fx=200.0, fy=200.0, frame_id="t"):
    h, w = depth.shape
    if color is None:
        color = np.full((h, w, 3), 128, dtype=np.uint8)
    return RgbdFrame(color=color, depth=depth.astype(np.float64), fx=fx, fy=fy,
                     cx=w / 2.0, cy=h / 2.0,
                     gravity=np.array([0.0, 1.0, 0.0]), frame_id=frame_id)


@pytest.fixture
def flat_wall_frame():
    """Fronto-parallel constant-depth plane: one dominant surface."""
    depth = np.full((120, 160), 2.0)
    return frame_from_depth(depth)


def render_box_room(boxes, h=240, w=320, fx=260.0, fy=260.0,
                    cam_pos=(3.2, 3.4, 1.5), look_at=(0.8, 0.9, 0.4),
                    room=(4.5, 4.5, 2.6), noise=0.0, seed=0,
                    box_colors=None):
    """Minimal ray-cast renderer used by unit tests.

    World: z up, floor plane z=0, walls x=0 and y=0. Camera: x right,
    y down, z forward. Returns (frame, masks, extras dict).
    """
    from scenelabel.geometry import Cuboid

    cam_pos = np.asarray(cam_pos, dtype=np.float64)
    look = np.asarray(look_at, dtype=np.float64)
    fwd = look - cam_pos
    fwd /= np.linalg.norm(fwd)
    world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, world_up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])  # world->cam rows

    us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    dirs_cam = np.stack([(us - w / 2.0) / fx, (vs - h / 2.0) / fy,
                         np.ones_like(us)], axis=-1)
    dirs_w = dirs_cam @ R  # R.T applied row-wise

    t_best = np.full((h, w), np.inf)
    hit_id = np.full((h, w), -10, dtype=int)  # -1 floor, -2/-3 walls, k>=0 box

    def consider(t, mask, ident):
        nonlocal t_best, hit_id
        better = mask & (t < t_best - 1e-12)
        t_best = np.where(better, t, t_best)
        hit_id = np.where(better, ident, hit_id)

    o = cam_pos
    with np.errstate(divide="ignore", invalid="ignore"):
        # floor z=0 within room bounds
        dz = dirs_w[..., 2]
        t = np.where(np.abs(dz) > 1e-12, -o[2] / dz, np.inf)
        p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs_w
        ok = np.isfinite(t) & (t > 0.05) & (p[..., 0] >= 0) & \
            (p[..., 0] <= room[0]) & (p[..., 1] >= 0) & (p[..., 1] <= room[1])
        consider(np.where(ok, t, np.inf), ok, -1)
        # wall x=0
        dx = dirs_w[..., 0]
        t = np.where(np.abs(dx) > 1e-12, -o[0] / dx, np.inf)
        p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs_w
        ok = np.isfinite(t) & (t > 0.05) & (p[..., 1] >= 0) & \
            (p[..., 1] <= room[1]) & (p[..., 2] >= 0) & (p[..., 2] <= room[2])
        consider(np.where(ok, t, np.inf), ok, -2)
        # wall y=0
        dy = dirs_w[..., 1]
        t = np.where(np.abs(dy) > 1e-12, -o[1] / dy, np.inf)
        p = o + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs_w
        ok = np.isfinite(t) & (t > 0.05) & (p[..., 0] >= 0) & \
            (p[..., 0] <= room[0]) & (p[..., 2] >= 0) & (p[..., 2] <= room[2])
        consider(np.where(ok, t, np.inf), ok, -3)

    for k, box in enumerate(boxes):
        q0 = box.to_body(o[None, :])[0]
        qd = dirs_w @ box.axes().T
        with np.errstate(divide="ignore", invalid="ignore"):
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
    rng = np.random.default_rng(seed)
    if noise > 0:
        depth = np.where(depth > 0,
                         np.maximum(0.05, depth + rng.normal(0, noise, depth.shape)
                                    * depth ** 2), 0.0)
    palette = {-10: (0, 0, 0), -1: (110, 90, 70), -2: (200, 200, 190),
               -3: (170, 180, 200)}
    if box_colors is None:
        box_colors = [(int(50 + 60 * ((k * 3) % 4)), int(40 + 50 * ((k * 5) % 5)),
                       int(60 + 45 * ((k * 7) % 5))) for k in range(len(boxes))]
    color = np.zeros((h, w, 3), dtype=np.uint8)
    for ident, col in palette.items():
        color[hit_id == ident] = col
    for k in range(len(boxes)):
        color[hit_id == k] = box_colors[k]

    frame = frame_from_depth(depth, color=color, fx=fx, fy=fy, frame_id="room")
    frame.gravity = R @ np.array([0.0, 0.0, -1.0])
    masks = [hit_id == k for k in range(len(boxes))]
    extras = {"R": R, "cam_pos": cam_pos, "hit_id": hit_id,
              "floor_mask": hit_id == -1,
              "wall_masks": [hit_id == -2, hit_id == -3]}
    return frame, masks, extras


def world_box(cx, cy, z_bottom, sx, sy, sz, yaw=0.0):
    from scenelabel.geometry import Cuboid
    fw = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    return Cuboid(np.array([cx, cy, z_bottom + sz / 2.0]),
                  np.array([0.0, 0.0, 1.0]), fw,
                  np.array([sx / 2.0, sy / 2.0, sz / 2.0]))


def box_to_cam(box, R, cam_pos):
    from scenelabel.geometry import Cuboid
    return Cuboid(R @ (box.center - cam_pos), R @ box.up, R @ box.forward,
                  box.half_extents.copy())
