"""Session state machine: one annotation session over one frame.

A session owns its segmentation, structure graph and event log; the prior
model snapshot it holds is immutable and shared. Actions mutate the session
under the caller's lock (the service serializes per-session access). The
action log alone, replayed against the same frame and model snapshot,
reproduces the final annotation record bit-exactly.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field

import numpy as np

from . import rgbd_io
from .geometry import Degenerate, cuboid_rect
from .predict import Suggestion, suggest_all
from .priors import PriorModel, UnknownCategory
from .refine import (
    NoOpError, RefineConfig, RefinementEvent, _with_edges_after, final_refine,
    global_refine, local_refine, undo_event,
)
from .rgbd_io import AnnotationRecord, ObjectAnnotation, RgbdFrame, encode_rle
from .scene_parse import (
    NoFloor, ParseConfig, TooFewPoints, extract_floor, extract_walls,
    fit_object_cuboid, parse_scene,
)
from .segmentation import (
    OversegConfig, Scribble, compute_normals, oversegment, refine_segments,
    scribble_segment,
)
from .structure_graph import FLOOR_ID, SGNode, StructureGraph, build_graph


class SessionError(Exception):
    pass


class InvalidAction(SessionError):
    pass


class UnknownNode(SessionError):
    pass


class LabelNotInSuggestions(SessionError):
    pass


@dataclass
class SessionConfig:
    m: int = 6
    allow_new_categories: bool = False
    normals_window: int = 5
    pcfg: ParseConfig = field(default_factory=ParseConfig)
    rcfg: RefineConfig = field(default_factory=RefineConfig)
    ocfg: OversegConfig = field(default_factory=OversegConfig)


class Session:
    def __init__(self, session_id: str, frame: RgbdFrame, model: PriorModel,
                 cfg: SessionConfig):
        self.id = session_id
        self.frame = frame
        self.model = model
        self.cfg = cfg
        self.phase = "segmenting"
        self.layout = None
        self.graph = StructureGraph(nodes={}, edges=set())
        self.node_points: dict[int, np.ndarray] = {}
        self.node_masks: dict[int, np.ndarray] = {}
        self.suggestions: dict[int, list[Suggestion]] = {}
        self.confirmed: dict[int, str] = {}
        self.action_log: list[dict] = []
        self.events: list[RefinementEvent] = []
        self.record: AnnotationRecord | None = None
        self.initial_edges: tuple[tuple[int, int], ...] = ()
        self.warnings: list[str] = []
        self.created_at = time.time()
        self.normals = None
        self.valid = None
        self.seg = None

    # -- construction --------------------------------------------------------

    @classmethod
    def create(cls, frame: RgbdFrame, model: PriorModel,
               masks: list[np.ndarray] | None = None,
               cfg: SessionConfig | None = None,
               session_id: str | None = None) -> "Session":
        cfg = cfg or SessionConfig()
        s = cls(session_id or uuid.uuid4().hex[:12], frame, model, cfg)
        s.normals, s.valid = compute_normals(frame, window=cfg.normals_window)
        s.seg = oversegment(frame, s.normals, s.valid, cfg.ocfg)
        try:
            s._parse(masks or [])
        except NoFloor as e:
            s.phase = "segmenting"
            s.warnings.append(f"floor not found: {e}; seed_floor required")
        return s

    def _parse(self, masks: list[np.ndarray], floor_seed: int | None = None,
               wall_seeds: list[int] | None = None) -> None:
        parsed = parse_scene(self.frame, self.seg, self.normals, masks,
                             self.cfg.pcfg, floor_seed=floor_seed,
                             wall_seeds=wall_seeds)
        self.layout = parsed.layout
        self.warnings.extend(parsed.warnings)
        nodes = []
        for k, cub in enumerate(parsed.cuboids):
            nodes.append(SGNode(id=k, cuboid=cub))
            self.node_points[k] = parsed.object_points[k]
            self.node_masks[k] = masks[k]
        self.graph = build_graph(self.layout, nodes, self.cfg.pcfg)
        self.initial_edges = tuple(self.graph.sorted_edges())
        self.phase = "labeling"
        self._resuggest()

    def _resuggest(self) -> None:
        self.suggestions = suggest_all(self.graph, self.model, self.cfg.m,
                                       self.layout, self.cfg.pcfg,
                                       self.cfg.rcfg, confirmed=self.confirmed)

    # -- actions ---------------------------------------------------------------

    def apply(self, action: dict) -> dict:
        """Validate and apply one user action; returns a state delta."""
        kind = action.get("kind")
        handlers = {"confirm": self._act_confirm, "reorder": self._act_reorder,
                    "type": self._act_type, "approve_all": self._act_approve_all,
                    "undo": self._act_undo, "scribble": self._act_scribble,
                    "seed_floor": self._act_seed_floor,
                    "seed_wall": self._act_seed_wall}
        if kind not in handlers:
            raise InvalidAction(f"unknown action kind: {kind}")
        delta = handlers[kind](action)
        self.action_log.append(action)
        return delta

    def _require_phase(self, *phases):
        if self.phase not in phases:
            raise InvalidAction(f"action not allowed in phase {self.phase}")

    def _node(self, action) -> int:
        nid = action.get("node_id")
        if nid is None or nid not in self.graph.nodes:
            raise UnknownNode(f"node {nid}")
        return int(nid)

    def _act_confirm(self, action):
        self._require_phase("labeling")
        nid = self._node(action)
        if nid in self.confirmed:
            raise InvalidAction(f"node {nid} already confirmed")
        if not self.suggestions.get(nid):
            raise InvalidAction(f"node {nid} has no suggestions to confirm")
        label = self.suggestions[nid][0].label
        return self._confirm_label(nid, label)

    def _act_reorder(self, action):
        self._require_phase("labeling")
        nid = self._node(action)
        if nid in self.confirmed:
            raise InvalidAction(f"node {nid} already confirmed")
        label = action.get("label")
        if label not in [s.label for s in self.suggestions.get(nid, [])]:
            raise LabelNotInSuggestions(f"{label!r} not suggested for node {nid}")
        return self._confirm_label(nid, label)

    def _act_type(self, action):
        self._require_phase("labeling")
        nid = self._node(action)
        if nid in self.confirmed:
            raise InvalidAction(f"node {nid} already confirmed")
        label = action.get("label")
        if not label:
            raise InvalidAction("type action requires a label")
        if label not in self.model.categories:
            if not self.cfg.allow_new_categories:
                raise UnknownCategory(
                    f"{label!r} is not a known category (extension disabled)")
            self.warnings.append(f"novel category {label!r} recorded; the prior "
                                 "model learns it at the next retrain")
        return self._confirm_label(nid, label)

    def _confirm_label(self, nid: int, label: str) -> dict:
        self.confirmed[nid] = label
        self.graph.nodes[nid].label = label
        known = label in self.model.categories
        new_events: list[RefinementEvent] = []
        if known:
            ev = local_refine(self.graph, nid, label, self.model, self.layout,
                              self.node_points.get(nid), self.cfg.pcfg,
                              self.cfg.rcfg)
            geometry_changed = ev.before_cuboid != ev.after_cuboid
            self.graph, gevents = global_refine(
                self.graph, nid, label, self.model, self.layout,
                self.frame.viewpoint, self.cfg.pcfg, self.cfg.rcfg,
                geometry_changed=geometry_changed)
            if geometry_changed:
                ev = _with_edges_after(ev, self.graph) if not gevents else \
                    RefinementEvent(kind=ev.kind, node_id=ev.node_id,
                                    before_cuboid=ev.before_cuboid,
                                    after_cuboid=ev.after_cuboid,
                                    before_flags=ev.before_flags,
                                    after_flags=ev.after_flags,
                                    edges_before=ev.edges_before,
                                    edges_after=gevents[0].edges_before,
                                    notes=ev.notes)
            if ev.changed:
                new_events.append(ev)
            new_events.extend(gevents)
        self.events.extend(new_events)
        self._resuggest()
        return self._delta(confirmed={nid: label},
                           events=[e.kind for e in new_events])

    def _act_approve_all(self, action):
        self._require_phase("labeling")
        for nid in sorted(self.graph.nodes):
            if nid not in self.confirmed:
                if not self.suggestions.get(nid):
                    raise InvalidAction(f"node {nid} has no suggestion to approve")
                label = self.suggestions[nid][0].label
                self.confirmed[nid] = label
                self.graph.nodes[nid].label = label
        self.graph, fevents = final_refine(self.graph, self.model, self.layout,
                                           self.node_points,
                                           self.frame.viewpoint, self.cfg.pcfg,
                                           self.cfg.rcfg)
        self.events.extend(fevents)
        refine_segments(self.graph, self.seg, self.frame, self.cfg.ocfg)
        self.record = self.annotation_record()
        self.phase = "done"
        self.suggestions = {}
        return self._delta(confirmed=dict(self.confirmed),
                           events=[e.kind for e in fevents])

    def _act_undo(self, action):
        self._require_phase("labeling")
        if not self.events:
            raise NoOpError("nothing to undo")
        ev = self.events.pop()
        self.graph = undo_event(self.graph, ev, self.layout, self.cfg.pcfg)
        self._resuggest()
        return self._delta(undone=ev.kind)

    def _act_scribble(self, action):
        self._require_phase("labeling")
        strokes = [Scribble(pixels=np.asarray(s["pixels"], dtype=int),
                            kind=s["kind"]) for s in action.get("strokes", [])]
        result = scribble_segment(self.frame, self.seg, strokes, self.cfg.ocfg)
        self.warnings.extend(result.warnings)
        mask = result.mask.copy()
        for other in self.node_masks.values():
            mask &= ~other
        points, valid = self.frame.backproject()
        sel = mask & valid
        try:
            cub = fit_object_cuboid(points[sel], self.normals[sel],
                                    self.layout.floor, self.cfg.pcfg,
                                    rng_seed=self.cfg.pcfg.rng_seed + 7000
                                    + len(self.graph.nodes))
        except (TooFewPoints, Degenerate) as e:
            raise InvalidAction(f"scribble produced no usable object: {e}")
        nid = max(self.graph.nodes, default=-1) + 1
        node = SGNode(id=nid, cuboid=cub)
        self.node_points[nid] = points[sel]
        self.node_masks[nid] = mask
        nodes = [self.graph.nodes[k] for k in sorted(self.graph.nodes)] + [node]
        self.graph = build_graph(self.layout, nodes, self.cfg.pcfg)
        self._resuggest()
        return self._delta(new_node=nid)

    def _act_seed_floor(self, action):
        self._require_phase("segmenting")
        sid = action.get("segment_id")
        if sid is None or sid not in self.seg.segments:
            raise InvalidAction(f"unknown segment {sid}")
        masks = [self.node_masks[k] for k in sorted(self.node_masks)]
        try:
            self._parse(masks, floor_seed=int(sid))
        except NoFloor as e:
            raise InvalidAction(f"seed segment unusable as floor: {e}")
        return self._delta(phase=self.phase)

    def _act_seed_wall(self, action):
        self._require_phase("labeling")
        sid = action.get("segment_id")
        if sid is None or sid not in self.seg.segments:
            raise InvalidAction(f"unknown segment {sid}")
        walls, wall_ids, warn = extract_walls(
            self.seg, self.layout.floor, self.layout.floor_segments,
            self.cfg.pcfg, seed_ids=[int(sid)])
        self.layout.walls = walls
        self.layout.wall_segments = wall_ids
        self.warnings.extend(warn)
        self.graph = build_graph(self.layout,
                                 [self.graph.nodes[k] for k in sorted(self.graph.nodes)],
                                 self.cfg.pcfg)
        self._resuggest()
        return self._delta(phase=self.phase)

    # -- outputs -----------------------------------------------------------------

    def annotation_record(self) -> AnnotationRecord:
        objs = []
        for nid in sorted(self.graph.nodes):
            n = self.graph.nodes[nid]
            objs.append(ObjectAnnotation(
                id=nid, label=n.label or "", mask_rle=encode_rle(self.node_masks[nid]),
                cuboid=n.cuboid.to_dict(), wall_contact=n.wall_contact,
                wall_align=n.wall_align))
        return AnnotationRecord(
            frame_id=self.frame.frame_id, image_size=self.frame.depth.shape,
            floor=self.layout.floor.to_dict(),
            walls=[w.to_dict() for w in self.layout.walls],
            objects=objs, edges=self.graph.sorted_edges())

    def node_state(self, nid: int) -> dict:
        n = self.graph.nodes[nid]
        corners_px = self.frame.project(n.cuboid.corners())
        from .geometry import convex_hull_2d
        try:
            poly = [[float(x), float(y)] for x, y in convex_hull_2d(corners_px)]
        except Degenerate:
            poly = [[float(x), float(y)] for x, y in corners_px]
        return {
            "id": nid,
            "label": n.label,
            "confirmed": nid in self.confirmed,
            "suggestions": [{"label": s.label, "score": s.score}
                            for s in self.suggestions.get(nid, [])],
            "wall_contact": n.wall_contact,
            "wall_align": n.wall_align,
            "polygon": poly,
            "mask_rle": rgbd_io.encode_rle(self.node_masks[nid]),
        }

    def state_dict(self) -> dict:
        return {
            "session_id": self.id,
            "frame_id": self.frame.frame_id,
            "phase": self.phase,
            "m": self.cfg.m,
            "image_size": list(self.frame.depth.shape),
            "nodes": [self.node_state(nid) for nid in sorted(self.graph.nodes)],
            "edges": [list(e) for e in self.graph.sorted_edges()],
            "model_hash": self.model.content_hash(),
            "warnings": list(self.warnings),
            "n_events": len(self.events),
            "record": self.record.to_dict() if self.record else None,
        }

    def _delta(self, **kw) -> dict:
        out = {"phase": self.phase,
               "edges": [list(e) for e in self.graph.sorted_edges()],
               "nodes": [self.node_state(nid) for nid in sorted(self.graph.nodes)]}
        out.update(kw)
        return out

    def session_log(self) -> dict:
        return {"schema": "session-log/1", "frame_id": self.frame.frame_id,
                "session_id": self.id, "m": self.cfg.m,
                "model_hash": self.model.content_hash(),
                "actions": list(self.action_log),
                "events": [e.to_dict() for e in self.events]}

    @classmethod
    def replay(cls, frame: RgbdFrame, model: PriorModel, actions: list[dict],
               masks: list[np.ndarray] | None = None,
               cfg: SessionConfig | None = None) -> "Session":
        """Re-run an action log against the same inputs."""
        s = cls.create(frame, model, masks=masks, cfg=cfg)
        for action in actions:
            s.apply(action)
        return s
