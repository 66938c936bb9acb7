"""HTTP service: sessions, actions, retraining, frame assets, metrics.

Sessions are single-writer (a per-session lock serializes actions); the
prior-model snapshot is immutable and swapped atomically by /retrain, so
running sessions keep the snapshot they started with.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from pydantic import BaseModel, Field

from .priors import PriorConfig, PriorModel, UnknownCategory, enrich_samples, retrain_incremental, train
from .refine import NoOpError
from .rgbd_io import decode_rle, load_frame
from .session import (
    InvalidAction, LabelNotInSuggestions, Session, SessionConfig, UnknownNode,
)
from .simgen import DEFAULT_CATEGORIES, DEFAULT_SIZE_SPEC


def default_model(seed: int = 0) -> PriorModel:
    """Catalog-only priors for a fresh install (no annotated scenes yet)."""
    cfg = PriorConfig()
    enrichment = enrich_samples(DEFAULT_SIZE_SPEC, cfg.n_enrich, rng_seed=seed,
                                cfg=cfg, categories=sorted(DEFAULT_CATEGORIES))
    return train([], sorted(DEFAULT_CATEGORIES), enrichment, cfg=cfg)


# -- wire models ---------------------------------------------------------------


class StrokePayload(BaseModel):
    pixels: list[list[int]] = Field(description="polyline vertices as [row, col]")
    kind: str = Field(pattern="^(foreground|background)$")


class SessionCreateRequest(BaseModel):
    frame_id: str
    masks: list[list[int]] | None = Field(
        default=None, description="optional per-object RLE masks")
    m: int | None = Field(default=None, ge=1, le=32)


class ActionRequest(BaseModel):
    kind: str = Field(
        pattern="^(confirm|reorder|type|approve_all|undo|scribble|seed_floor|seed_wall)$")
    node_id: int | None = None
    label: str | None = None
    strokes: list[StrokePayload] | None = None
    segment_id: int | None = None

    def to_action(self) -> dict:
        action: dict = {"kind": self.kind}
        if self.node_id is not None:
            action["node_id"] = self.node_id
        if self.label is not None:
            action["label"] = self.label
        if self.strokes is not None:
            action["strokes"] = [{"pixels": s.pixels, "kind": s.kind}
                                 for s in self.strokes]
        if self.segment_id is not None:
            action["segment_id"] = self.segment_id
        return action


class SuggestionState(BaseModel):
    label: str
    score: float


class NodeState(BaseModel):
    id: int
    label: str | None
    confirmed: bool
    suggestions: list[SuggestionState]
    wall_contact: bool
    wall_align: bool
    polygon: list[list[float]]
    mask_rle: list[int]


class SessionState(BaseModel):
    session_id: str
    frame_id: str
    phase: str
    m: int
    image_size: list[int]
    nodes: list[NodeState]
    edges: list[list[int]]
    model_hash: str
    warnings: list[str]
    n_events: int
    record: dict | None


class ActionResponse(BaseModel):
    phase: str
    nodes: list[NodeState]
    edges: list[list[int]]
    confirmed: dict[int, str] | None = None
    events: list[str] | None = None
    undone: str | None = None
    new_node: int | None = None


class RetrainRequest(BaseModel):
    session_ids: list[str] | None = None


class RetrainResponse(BaseModel):
    model_hash: str
    n_graphs: int


class SessionMetrics(BaseModel):
    session_id: str
    frame_id: str
    phase: str
    n_objects: int
    confirms: int
    reorders: int
    types: int
    undos: int
    scribbles: int
    elapsed_s: float


class MetricsResponse(BaseModel):
    n_sessions: int
    n_done: int
    totals: dict[str, int]
    sessions: list[SessionMetrics]


class AppState:
    def __init__(self, data_dir: str | Path, model: PriorModel,
                 session_cfg: SessionConfig):
        self.data_dir = Path(data_dir)
        self.model = model
        self.session_cfg = session_cfg
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.global_lock = threading.Lock()

    def session(self, sid: str) -> Session:
        if sid not in self.sessions:
            raise HTTPException(404, f"session {sid} not found")
        return self.sessions[sid]


def create_app(data_dir: str | Path, model: PriorModel | None = None,
               m: int = 6, allow_new_categories: bool = False) -> FastAPI:
    state = AppState(data_dir, model or default_model(),
                     SessionConfig(m=m, allow_new_categories=allow_new_categories))
    app = FastAPI(title="scenelabel", version="0.1.0")
    app.state.scenelabel = state

    def load_frame_checked(frame_id: str):
        path = state.data_dir / frame_id
        if not path.exists():
            raise HTTPException(404, f"frame {frame_id} not found")
        return load_frame(path)

    @app.post("/sessions", response_model=SessionState)
    def create_session(req: SessionCreateRequest):
        frame = load_frame_checked(req.frame_id)
        masks = None
        if req.masks is not None:
            shape = frame.depth.shape
            masks = [decode_rle(rle, shape) for rle in req.masks]
        cfg = state.session_cfg
        if req.m is not None:
            cfg = SessionConfig(m=req.m,
                                allow_new_categories=cfg.allow_new_categories)
        with state.global_lock:
            model = state.model
        session = Session.create(frame, model, masks=masks, cfg=cfg)
        with state.global_lock:
            state.sessions[session.id] = session
            state.locks[session.id] = threading.Lock()
        return session.state_dict()

    @app.get("/sessions/{sid}", response_model=SessionState)
    def get_session(sid: str):
        return state.session(sid).state_dict()

    @app.post("/sessions/{sid}/actions", response_model=ActionResponse)
    def post_action(sid: str, req: ActionRequest):
        session = state.session(sid)
        lock = state.locks[sid]
        with lock:  # one in-flight action per session; callers queue here
            try:
                delta = session.apply(req.to_action())
            except UnknownNode as e:
                raise HTTPException(404, str(e))
            except (InvalidAction, LabelNotInSuggestions, NoOpError,
                    UnknownCategory) as e:
                raise HTTPException(409, str(e))
            if session.phase == "done" and session.record is not None:
                _persist_session(session)
        return delta

    def _persist_session(session: Session) -> None:
        import json as _json

        from .rgbd_io import save_annotation
        frame_dir = state.data_dir / session.frame.frame_id
        if not frame_dir.exists():
            return
        save_annotation(session.record,
                        frame_dir / f"annotation.{session.id}.json")
        with open(frame_dir / f"session.{session.id}.json", "w") as f:
            _json.dump(session.session_log(), f, indent=1)

    @app.post("/retrain", response_model=RetrainResponse)
    def retrain(req: RetrainRequest):
        with state.global_lock:
            candidates = (req.session_ids
                          if req.session_ids is not None
                          else sorted(state.sessions))
            graphs = []
            for sid in candidates:
                s = state.sessions.get(sid)
                if s is not None and s.phase == "done":
                    graphs.append(s.graph)
            if not graphs:
                raise HTTPException(409, "no completed sessions to retrain on")
            novel = sorted({n.label for g in graphs for n in g.nodes.values()
                            if n.label} - set(state.model.categories))
            new_model = retrain_incremental(state.model, graphs,
                                            new_categories=novel)
            state.model = new_model
        return RetrainResponse(model_hash=new_model.content_hash(),
                               n_graphs=len(graphs))

    @app.get("/metrics", response_model=MetricsResponse)
    def metrics():
        import time as _time
        out = []
        totals = {"confirm": 0, "reorder": 0, "type": 0, "approve_all": 0,
                  "undo": 0, "scribble": 0, "seed_floor": 0, "seed_wall": 0}
        with state.global_lock:
            sessions = list(state.sessions.values())
        for s in sessions:
            kinds = [a["kind"] for a in s.action_log]
            for k in kinds:
                totals[k] = totals.get(k, 0) + 1
            out.append(SessionMetrics(
                session_id=s.id, frame_id=s.frame.frame_id, phase=s.phase,
                n_objects=len(s.graph.nodes),
                confirms=kinds.count("confirm"),
                reorders=kinds.count("reorder"),
                types=kinds.count("type"),
                undos=kinds.count("undo"),
                scribbles=kinds.count("scribble"),
                elapsed_s=_time.time() - s.created_at))
        return MetricsResponse(n_sessions=len(out),
                               n_done=sum(1 for s in sessions if s.phase == "done"),
                               totals=totals, sessions=out)

    @app.get("/frames")
    def list_frames():
        if not state.data_dir.exists():
            return {"frames": []}
        frames = sorted(p.name for p in state.data_dir.iterdir()
                        if (p / "meta.json").exists())
        return {"frames": frames}

    @app.get("/frames/{frame_id}/color")
    def frame_color(frame_id: str):
        path = state.data_dir / frame_id / "color.png"
        if not path.exists():
            raise HTTPException(404, f"frame {frame_id} not found")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/frames/{frame_id}/overlay")
    def frame_overlay(frame_id: str):
        """Segment-boundary overlay (transparent PNG) for scribble guidance."""
        from PIL import Image
        from skimage.segmentation import find_boundaries

        from .segmentation import compute_normals, oversegment
        frame = load_frame_checked(frame_id)
        normals, valid = compute_normals(frame,
                                         window=state.session_cfg.normals_window)
        seg = oversegment(frame, normals, valid, state.session_cfg.ocfg)
        bounds = find_boundaries(seg.label_map, mode="outer")
        h, w = bounds.shape
        rgba = np.zeros((h, w, 4), dtype=np.uint8)
        rgba[bounds] = (255, 255, 255, 160)
        buf = io.BytesIO()
        Image.fromarray(rgba).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    return app
