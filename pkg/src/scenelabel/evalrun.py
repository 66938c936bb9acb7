"""Scripted-user evaluation: per-trial action counts, Top-3-Hit, edge error.

The scripted user inspects objects in id order, confirming rank-1 matches,
re-ordering when the true label appears lower in the list, typing otherwise,
and finishes with approve-all. Trials retrain the priors on everything
annotated so far, so later trials run with richer models.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .priors import PriorModel, PriorConfig, enrich_samples, retrain_incremental, train
from .session import Session, SessionConfig
from .simgen import DEFAULT_SIZE_SPEC, GenParams, SyntheticScene, generate_scene
from .structure_graph import edge_edit_distance


@dataclass
class TrialReport:
    trial: int
    n_scenes: int = 0
    n_objects: int = 0
    confirms: int = 0
    reorders: int = 0
    types: int = 0
    top3_hits: int = 0
    edge_err_initial: int = 0
    edge_err_final: int = 0
    elapsed_s: float = 0.0

    @property
    def top3_ratio(self) -> float:
        return self.top3_hits / self.n_objects if self.n_objects else 0.0

    @property
    def confirm_ratio(self) -> float:
        return self.confirms / self.n_objects if self.n_objects else 0.0

    @property
    def reorder_ratio(self) -> float:
        return self.reorders / self.n_objects if self.n_objects else 0.0

    @property
    def type_ratio(self) -> float:
        return self.types / self.n_objects if self.n_objects else 0.0

    @property
    def edge_err_initial_rate(self) -> float:
        return self.edge_err_initial / self.n_objects if self.n_objects else 0.0

    @property
    def edge_err_final_rate(self) -> float:
        return self.edge_err_final / self.n_objects if self.n_objects else 0.0

    ROW_FIELDS = ["trial", "n_scenes", "n_objects", "confirms", "reorders",
                  "types", "top3_ratio", "confirm_ratio", "reorder_ratio",
                  "type_ratio", "edge_err_initial_rate", "edge_err_final_rate",
                  "elapsed_s"]

    def row(self) -> list:
        return [getattr(self, f) for f in self.ROW_FIELDS]


def reports_to_csv(reports: list[TrialReport], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TrialReport.ROW_FIELDS)
        for r in reports:
            writer.writerow([f"{v:.4f}" if isinstance(v, float) else v
                             for v in r.row()])


def format_report_table(reports: list[TrialReport]) -> str:
    header = (f"{'trial':>5} {'scenes':>6} {'objects':>7} {'confirm':>8}"
              f" {'reorder':>8} {'type':>6} {'top3':>6} {'edge0':>7}"
              f" {'edge1':>7} {'secs':>7}")
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(
            f"{r.trial:>5} {r.n_scenes:>6} {r.n_objects:>7} "
            f"{r.confirm_ratio:>8.3f} {r.reorder_ratio:>8.3f} "
            f"{r.type_ratio:>6.3f} {r.top3_ratio:>6.3f} "
            f"{r.edge_err_initial_rate:>7.3f} {r.edge_err_final_rate:>7.3f} "
            f"{r.elapsed_s:>7.1f}")
    return "\n".join(lines)


def simulate_user(session: Session, scene: SyntheticScene) -> dict:
    """Drive a session with the scripted policy; session ends done."""
    entry = {"confirms": 0, "reorders": 0, "types": 0, "top3_hits": 0,
             "n_objects": len(scene.labels)}
    for nid in sorted(session.graph.nodes):
        truth = scene.labels[nid]
        current = [s.label for s in session.suggestions.get(nid, [])]
        if truth in current[:3]:
            entry["top3_hits"] += 1
        if current and current[0] == truth:
            session.apply({"kind": "confirm", "node_id": nid})
            entry["confirms"] += 1
        elif truth in current:
            session.apply({"kind": "reorder", "node_id": nid, "label": truth})
            entry["reorders"] += 1
        else:
            session.apply({"kind": "type", "node_id": nid, "label": truth})
            entry["types"] += 1
    session.apply({"kind": "approve_all"})

    initial = scene.gt_graph.__class__(
        nodes=dict(session.graph.nodes),
        edges={tuple(e) for e in session.initial_edges})
    entry["edge_err_initial"] = edge_edit_distance(initial, scene.gt_graph)
    entry["edge_err_final"] = edge_edit_distance(session.graph, scene.gt_graph)
    return entry


def bootstrap_model(categories: list[str], size_spec: dict, n_scenes: int,
                    gen: GenParams, seed: int,
                    prior_cfg: PriorConfig | None = None) -> PriorModel:
    """Initial priors: ground-truth graphs of a few simple scenes plus the
    jittered catalog sizes."""
    prior_cfg = prior_cfg or PriorConfig()
    graphs = []
    for k in range(n_scenes):
        scene = generate_scene(gen, seed=seed * 100_003 + k)
        graphs.append(scene.gt_graph)
    enrichment = enrich_samples(size_spec, prior_cfg.n_enrich,
                                rng_seed=seed + 17, cfg=prior_cfg,
                                categories=sorted(categories))
    return train(graphs, sorted(categories), enrichment, cfg=prior_cfg)


def record_to_scene(frame, record):
    """Adapt a ground-truth annotation record to the scene interface the
    scripted user consumes (frame, masks, labels, gt_graph)."""
    from types import SimpleNamespace

    from .geometry import Cuboid
    from .rgbd_io import decode_rle
    from .structure_graph import SGNode, StructureGraph

    masks = [decode_rle(o.mask_rle, record.image_size) for o in record.objects]
    nodes = {}
    for o in record.objects:
        nodes[o.id] = SGNode(id=o.id, cuboid=Cuboid.from_dict(o.cuboid),
                             label=o.label, wall_contact=o.wall_contact,
                             wall_align=o.wall_align)
    graph = StructureGraph(nodes=nodes,
                           edges={(int(p), int(c)) for p, c in record.edges})
    return SimpleNamespace(frame=frame, masks=masks,
                           labels=[o.label for o in record.objects],
                           gt_graph=graph)


def run_trials(params: GenParams, n_trials: int, per_trial: int,
               bootstrap: int, m: int, seed: int,
               categories: list[str] | None = None,
               size_spec: dict | None = None,
               bootstrap_params: GenParams | None = None,
               session_cfg: SessionConfig | None = None,
               scene_provider=None, bootstrap_graphs=None,
               progress=None) -> tuple[list[TrialReport], PriorModel]:
    """Incremental-learning protocol: trial t annotates its scenes with the
    model trained on everything before t, then retrains.

    ``scene_provider(index)`` substitutes pre-annotated dataset scenes for
    the generator; ``bootstrap_graphs`` substitutes the bootstrap corpus."""
    categories = sorted(categories or params.categories)
    size_spec = size_spec or DEFAULT_SIZE_SPEC
    session_cfg = session_cfg or SessionConfig(m=m)
    session_cfg.m = m
    if bootstrap_graphs is not None:
        prior_cfg = PriorConfig()
        enrichment = enrich_samples(size_spec, prior_cfg.n_enrich,
                                    rng_seed=seed + 17, cfg=prior_cfg,
                                    categories=categories)
        model = train(list(bootstrap_graphs), categories, enrichment,
                      cfg=prior_cfg)
    else:
        if bootstrap_params is None:
            bootstrap_params = GenParams(width=params.width,
                                         height=params.height,
                                         count_range=(1, 2),
                                         categories=params.categories,
                                         support_bias=0.5)
        model = bootstrap_model(categories, size_spec, bootstrap,
                                bootstrap_params, seed)
    reports: list[TrialReport] = []
    scene_counter = 0
    for t in range(1, n_trials + 1):
        report = TrialReport(trial=t)
        t0 = time.time()
        annotated = []
        for k in range(per_trial):
            scene_counter += 1
            if scene_provider is not None:
                scene = scene_provider(scene_counter - 1)
            else:
                scene = generate_scene(params,
                                       seed=seed * 1_000_003 + scene_counter)
            session = Session.create(scene.frame, model, masks=scene.masks,
                                     cfg=session_cfg)
            if session.phase != "labeling":
                # unparseable scene: count objects as typed, skip retrain use
                report.n_scenes += 1
                report.n_objects += len(scene.labels)
                report.types += len(scene.labels)
                continue
            entry = simulate_user(session, scene)
            report.n_scenes += 1
            report.n_objects += entry["n_objects"]
            report.confirms += entry["confirms"]
            report.reorders += entry["reorders"]
            report.types += entry["types"]
            report.top3_hits += entry["top3_hits"]
            report.edge_err_initial += entry["edge_err_initial"]
            report.edge_err_final += entry["edge_err_final"]
            annotated.append(session.graph)
            if progress:
                progress(t, k + 1, per_trial)
        model = retrain_incremental(model, annotated)
        report.elapsed_s = time.time() - t0
        reports.append(report)
    return reports, model
