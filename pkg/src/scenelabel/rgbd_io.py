"""Frame ingestion and persistence of annotations, graphs, models and logs.

On-disk formats (all versioned, human-inspectable where structured):

frame directory
    color.png   8-bit RGB
    depth.png   16-bit grayscale, millimeters, 0 = invalid
    meta.json   {"schema": "frame-meta/1", "frame_id", "fx", "fy", "cx",
                 "cy", "gravity": [x, y, z], "viewpoint": [x, y, z]}

annotation document (annotation/1)
    frame_id, image_size, floor plane, wall planes, objects with labels,
    run-length masks, cuboids and wall flags, directed support edges
    (parent -1 denotes the floor).

Pixel masks are run-length encoded row-major starting with the count of
zeros, which makes the encoding canonical and round trips bit-exact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

FRAME_SCHEMA = "frame-meta/1"
ANNOTATION_SCHEMA = "annotation/1"


class IoError(Exception):
    pass


class MissingFile(IoError):
    pass


class DimensionMismatch(IoError):
    pass


class BadMetadata(IoError):
    pass


class SchemaVersionMismatch(IoError):
    pass


class InvariantViolation(IoError):
    pass


@dataclass
class RgbdFrame:
    """Registered color + depth with calibration and gravity metadata.

    depth is float64 meters after load; 0 marks invalid pixels. gravity is a
    unit vector in camera coordinates; the camera sits at ``viewpoint``
    (conventionally the origin).
    """

    color: np.ndarray        # (H, W, 3) uint8
    depth: np.ndarray        # (H, W) float64 meters, 0 = invalid
    fx: float
    fy: float
    cx: float
    cy: float
    gravity: np.ndarray      # (3,) unit
    frame_id: str
    viewpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))
    warnings: list[str] = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape  # (H, W)

    def backproject(self) -> tuple[np.ndarray, np.ndarray]:
        """Pinhole back-projection to camera coordinates.

        Returns (points (H, W, 3) float64 meters, valid (H, W) bool).
        """
        h, w = self.depth.shape
        us, vs = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
        z = self.depth
        x = (us - self.cx) * z / self.fx
        y = (vs - self.cy) * z / self.fy
        return np.stack([x, y, z], axis=-1), z > 0

    def project(self, points: np.ndarray) -> np.ndarray:
        """Camera points -> pixel coordinates (u, v); callers guard z > 0."""
        pts = np.asarray(points, dtype=np.float64)
        z = np.clip(pts[..., 2], 1e-9, None)
        u = self.fx * pts[..., 0] / z + self.cx
        v = self.fy * pts[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)


def _check_meta_field(meta: dict, name: str):
    if name not in meta:
        raise BadMetadata(f"meta.json missing field: {name}")
    return meta[name]


def load_frame(path: str | Path) -> RgbdFrame:
    """Load a frame directory; validates dimensions and metadata."""
    path = Path(path)
    color_p, depth_p, meta_p = path / "color.png", path / "depth.png", path / "meta.json"
    for p in (color_p, depth_p, meta_p):
        if not p.exists():
            raise MissingFile(str(p))
    color = np.asarray(Image.open(color_p).convert("RGB"))
    depth_raw = np.asarray(Image.open(depth_p))
    if depth_raw.dtype not in (np.uint16, np.int32, np.uint8):
        raise BadMetadata(f"depth.png must be an integer raster, got {depth_raw.dtype}")
    if color.shape[:2] != depth_raw.shape[:2]:
        raise DimensionMismatch(
            f"color {color.shape[:2]} vs depth {depth_raw.shape[:2]}")
    with open(meta_p) as f:
        meta = json.load(f)
    if meta.get("schema") != FRAME_SCHEMA:
        raise SchemaVersionMismatch(f"expected {FRAME_SCHEMA}, got {meta.get('schema')}")
    fx = float(_check_meta_field(meta, "fx"))
    fy = float(_check_meta_field(meta, "fy"))
    cx = float(_check_meta_field(meta, "cx"))
    cy = float(_check_meta_field(meta, "cy"))
    if fx <= 0 or fy <= 0:
        raise BadMetadata("fx and fy must be positive")
    gravity = np.asarray(_check_meta_field(meta, "gravity"), dtype=np.float64)
    if gravity.shape != (3,):
        raise BadMetadata("gravity must be a 3-vector")
    norm = float(np.linalg.norm(gravity))
    if norm < 1e-9:
        raise BadMetadata("gravity must be nonzero")
    warnings = []
    if abs(norm - 1.0) > 1e-6:
        gravity = gravity / norm
        warnings.append(f"gravity renormalized from |g|={norm:.6g}")
        log.warning("frame %s: %s", meta.get("frame_id"), warnings[-1])
    viewpoint = np.asarray(meta.get("viewpoint", [0.0, 0.0, 0.0]), dtype=np.float64)
    depth_m = depth_raw.astype(np.float64) / 1000.0
    return RgbdFrame(color=color, depth=depth_m, fx=fx, fy=fy, cx=cx, cy=cy,
                     gravity=gravity, frame_id=str(_check_meta_field(meta, "frame_id")),
                     viewpoint=viewpoint, warnings=warnings)


def save_frame(frame: RgbdFrame, path: str | Path) -> None:
    """Write a frame directory (depth rounded to integer millimeters)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    Image.fromarray(frame.color.astype(np.uint8)).save(path / "color.png")
    depth_mm = np.clip(np.round(frame.depth * 1000.0), 0, 65535).astype(np.uint16)
    Image.fromarray(depth_mm).save(path / "depth.png")
    meta = {"schema": FRAME_SCHEMA, "frame_id": frame.frame_id,
            "fx": frame.fx, "fy": frame.fy, "cx": frame.cx, "cy": frame.cy,
            "gravity": [float(x) for x in frame.gravity],
            "viewpoint": [float(x) for x in frame.viewpoint]}
    with open(path / "meta.json", "w") as f:
        json.dump(meta, f, indent=1)


# ---------------------------------------------------------------------------
# run-length masks


def encode_rle(mask: np.ndarray) -> list[int]:
    """Row-major RLE; counts alternate starting with zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return []
    changes = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return [int(c) for c in counts]


def decode_rle(counts: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = int(np.prod(shape))
    flat = np.zeros(total, dtype=bool)
    pos, val = 0, False
    for c in counts:
        if val:
            flat[pos:pos + c] = True
        pos += c
        val = not val
    if pos != total:
        raise InvariantViolation(f"RLE covers {pos} pixels, expected {total}")
    return flat.reshape(shape)


# ---------------------------------------------------------------------------
# annotation records


@dataclass
class ObjectAnnotation:
    id: int
    label: str
    mask_rle: list[int]
    cuboid: dict
    wall_contact: bool = False
    wall_align: bool = False


@dataclass
class AnnotationRecord:
    frame_id: str
    image_size: tuple[int, int]          # (H, W)
    floor: dict                          # plane dict
    walls: list[dict]
    objects: list[ObjectAnnotation]
    edges: list[tuple[int, int]]         # (parent, child); parent -1 = floor

    def validate(self) -> None:
        ids = {o.id for o in self.objects}
        if len(ids) != len(self.objects):
            raise InvariantViolation("duplicate object ids")
        for p, c in self.edges:
            if c not in ids or (p != -1 and p not in ids):
                raise InvariantViolation(f"edge ({p}, {c}) references unknown id")
        total = np.zeros(self.image_size, dtype=np.int32)
        for o in self.objects:
            total += decode_rle(o.mask_rle, self.image_size).astype(np.int32)
        if np.any(total > 1):
            raise InvariantViolation("object masks overlap")
        if not self.floor:
            raise InvariantViolation("record must carry exactly one floor plane")

    def to_dict(self) -> dict:
        return {
            "schema": ANNOTATION_SCHEMA,
            "frame_id": self.frame_id,
            "image_size": list(self.image_size),
            "floor": self.floor,
            "walls": self.walls,
            "objects": [{"id": o.id, "label": o.label, "mask_rle": o.mask_rle,
                         "cuboid": o.cuboid, "wall_contact": o.wall_contact,
                         "wall_align": o.wall_align} for o in self.objects],
            "edges": [[int(p), int(c)] for p, c in self.edges],
        }

    @staticmethod
    def from_dict(d: dict) -> "AnnotationRecord":
        if d.get("schema") != ANNOTATION_SCHEMA:
            raise SchemaVersionMismatch(
                f"expected {ANNOTATION_SCHEMA}, got {d.get('schema')}")
        objects = [ObjectAnnotation(id=int(o["id"]), label=o["label"],
                                    mask_rle=[int(x) for x in o["mask_rle"]],
                                    cuboid=o["cuboid"],
                                    wall_contact=bool(o["wall_contact"]),
                                    wall_align=bool(o["wall_align"]))
                   for o in d["objects"]]
        return AnnotationRecord(
            frame_id=d["frame_id"], image_size=tuple(d["image_size"]),
            floor=d["floor"], walls=list(d["walls"]), objects=objects,
            edges=[(int(p), int(c)) for p, c in d["edges"]])


def save_annotation(record: AnnotationRecord, path: str | Path) -> None:
    record.validate()
    with open(path, "w") as f:
        json.dump(record.to_dict(), f, indent=1)


def load_annotation(path: str | Path) -> AnnotationRecord:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    with open(path) as f:
        return AnnotationRecord.from_dict(json.load(f))


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(obj: dict) -> str:
    import hashlib
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
