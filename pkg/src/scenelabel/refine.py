"""Context-driven structure refinement.

Every geometric change is recorded as an undoable event carrying full
before/after snapshots (cuboid, wall flags, edge set), so replaying an event
log reproduces the final graph exactly and undo is a simple restore.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Cuboid, cuboid_bottom, cuboid_rect, cuboid_top, cuboids_intersect,
    expand_to_enclose, extrude_bottom_to, fit_upright_obb,
    ray_intersects_cuboid, rect_distance,
)
from .scene_parse import ParseConfig, RoomLayout
from .structure_graph import (
    FLOOR_ID, SGNode, StructureGraph, build_graph, compute_wall_flags,
    nearest_wall_face,
)


class NoOpError(Exception):
    pass


@dataclass(frozen=True)
class RefineConfig:
    over_expand_ratio: float = 0.3   # growth beyond this fraction is rejected
    diag_ratio: float = 0.5          # rect distance cutoff vs target diagonal
    support_ps_threshold: float = 0.7


@dataclass
class RefinementEvent:
    kind: str                        # local | global-extrude | final-expand | final-extrude
    node_id: int
    before_cuboid: dict
    after_cuboid: dict
    before_flags: tuple[bool, bool]
    after_flags: tuple[bool, bool]
    edges_before: tuple[tuple[int, int], ...]
    edges_after: tuple[tuple[int, int], ...]
    notes: tuple[str, ...] = ()

    @property
    def changed(self) -> bool:
        return (self.before_cuboid != self.after_cuboid
                or self.edges_before != self.edges_after
                or self.before_flags != self.after_flags)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "node_id": self.node_id,
                "before_cuboid": self.before_cuboid,
                "after_cuboid": self.after_cuboid,
                "before_flags": list(self.before_flags),
                "after_flags": list(self.after_flags),
                "edges_before": [list(e) for e in self.edges_before],
                "edges_after": [list(e) for e in self.edges_after],
                "notes": list(self.notes)}

    @staticmethod
    def from_dict(d: dict) -> "RefinementEvent":
        return RefinementEvent(
            kind=d["kind"], node_id=d["node_id"],
            before_cuboid=d["before_cuboid"], after_cuboid=d["after_cuboid"],
            before_flags=tuple(d["before_flags"]),
            after_flags=tuple(d["after_flags"]),
            edges_before=tuple(tuple(e) for e in d["edges_before"]),
            edges_after=tuple(tuple(e) for e in d["edges_after"]),
            notes=tuple(d["notes"]))


def is_over_expanded(c: Cuboid, c_expanded: Cuboid, scene_cuboids: list[Cuboid],
                     cfg: RefineConfig | None = None) -> bool:
    """Growth beyond the volume ratio, or any newly clipped scene cuboid."""
    cfg = cfg or RefineConfig()
    if c_expanded.volume() - c.volume() > cfg.over_expand_ratio * c.volume():
        return True
    for other in scene_cuboids:
        if cuboids_intersect(other, c_expanded) and not cuboids_intersect(other, c):
            return True
    return False


def likely_supports(node_i: SGNode, node_j: SGNode, all_nodes: dict[int, SGNode],
                    layout: RoomLayout, pcfg: ParseConfig,
                    rcfg: RefineConfig | None = None) -> bool:
    """Could i physically support j after a permissible expansion?"""
    rcfg = rcfg or RefineConfig()
    floor = layout.floor
    if abs(cuboid_top(node_i.cuboid, floor) - cuboid_bottom(node_j.cuboid, floor)) > pcfg.d_t:
        return False
    if rect_distance(node_i.rect, node_j.rect) > rcfg.diag_ratio * node_j.rect.diagonal():
        return False
    expanded = expand_to_enclose(node_i.cuboid, node_j.rect, layout.frame)
    others = [n.cuboid for nid, n in sorted(all_nodes.items())
              if nid not in (node_i.id, node_j.id)]
    return not is_over_expanded(node_i.cuboid, expanded, others, rcfg)


def likely_occludes(node_i: SGNode, node_j: SGNode, viewpoint: np.ndarray,
                    layout: RoomLayout) -> bool:
    """Does i block sight of j's floor-extruded frontal face?"""
    if node_i.id == node_j.id:
        return False
    extruded = extrude_bottom_to(node_j.cuboid, 0.0, layout.floor)
    face = _frontal_face(extruded, viewpoint)
    for corner in face:
        if ray_intersects_cuboid(viewpoint, corner - viewpoint, node_i.cuboid):
            return True
    return False


def _frontal_face(c: Cuboid, viewpoint: np.ndarray) -> np.ndarray:
    """Corners of the vertical face most directly facing the viewpoint."""
    best = None
    axes = [c.forward, c.side]
    for k, axis in enumerate(axes):
        other = axes[1 - k]
        he_a, he_o = c.half_extents[k], c.half_extents[1 - k]
        for sign in (1.0, -1.0):
            center = c.center + sign * he_a * axis
            view = center - np.asarray(viewpoint, dtype=np.float64)
            n = np.linalg.norm(view)
            if n < 1e-12:
                continue
            score = float((sign * axis) @ (view / n))
            if best is None or score < best[0]:
                corners = np.array(
                    [center + so * he_o * other + su * c.half_extents[2] * c.up
                     for so in (-1, 1) for su in (-1, 1)])
                best = (score, corners)
    return best[1]


def _snapshot(node: SGNode):
    return node.cuboid.to_dict(), (node.wall_contact, node.wall_align)


def _apply_cuboid(node: SGNode, cuboid: Cuboid, layout: RoomLayout,
                  pcfg: ParseConfig) -> None:
    node.cuboid = cuboid
    node.rect = cuboid_rect(cuboid, layout.frame)
    node.wall_contact, node.wall_align = compute_wall_flags(cuboid, layout, pcfg)


def local_refine(graph: StructureGraph, node_id: int, label: str, model,
                 layout: RoomLayout, points: np.ndarray | None,
                 pcfg: ParseConfig, rcfg: RefineConfig | None = None) -> RefinementEvent:
    """Constraint-driven cuboid adjustment after a label is confirmed.

    Applies, in order: wall alignment (O_p), wall-contact extrusion (O_c),
    floor extrusion (O_s), bottom snap to the parent's top. Wall steps are
    skipped (with a note) when the layout has no walls; growth steps are
    skipped when over-expanded.
    """
    rcfg = rcfg or RefineConfig()
    node = graph.nodes[node_id]
    before_cuboid, before_flags = _snapshot(node)
    edges = tuple(graph.sorted_edges())
    notes: list[str] = []
    c = node.cuboid
    others = [n.cuboid for nid, n in sorted(graph.nodes.items()) if nid != node_id]
    floor = layout.floor

    if label in model.o_p:
        if not layout.walls:
            notes.append("align skipped: no wall")
        elif points is None or points.shape[0] < 3:
            notes.append("align skipped: no points to refit")
        else:
            _, _, wi, _ = nearest_wall_face(c, layout.walls)
            wall_n = layout.walls[wi].normal
            horiz = wall_n - float(wall_n @ floor.normal) * floor.normal
            if np.linalg.norm(horiz) < 1e-9:
                notes.append("align skipped: wall parallel to floor")
            else:
                c = fit_upright_obb(points, floor.normal, horiz / np.linalg.norm(horiz))

    if label in model.o_c:
        if not layout.walls:
            notes.append("contact skipped: no wall")
        else:
            normal, corners, wi, _ = nearest_wall_face(c, layout.walls)
            wall = layout.walls[wi]
            rate = float(normal @ wall.normal)
            if abs(rate) < 1e-6:
                notes.append("contact skipped: face parallel to extrusion")
            else:
                sds = wall.signed_distance(corners)
                nearest = sds[int(np.argmin(np.abs(sds)))]
                t = -float(nearest) / rate  # negative t shrinks back to the wall
                if abs(t) > 1e-9:
                    axis_idx = 0 if abs(abs(float(normal @ c.forward)) - 1.0) < 1e-9 else 1
                    he = c.half_extents.copy()
                    he[axis_idx] += t / 2.0
                    cand = Cuboid(center=c.center + (t / 2.0) * normal, up=c.up,
                                  forward=c.forward, half_extents=he)
                    if t > 0 and is_over_expanded(c, cand, others, rcfg):
                        notes.append("contact extrusion skipped: over-expanded")
                    else:
                        c = cand

    if label in model.o_s:
        bottom = cuboid_bottom(c, floor)
        if abs(bottom) > 1e-9:
            cand = extrude_bottom_to(c, 0.0, floor)
            if bottom > 0 and is_over_expanded(c, cand, others, rcfg):
                notes.append("floor extrusion skipped: over-expanded")
            else:
                c = cand

    parent = graph.parent_of(node_id)
    if parent is not None and parent != FLOOR_ID:
        target = cuboid_top(graph.nodes[parent].cuboid, floor)
        bottom = cuboid_bottom(c, floor)
        if abs(bottom - target) > 1e-9:
            cand = extrude_bottom_to(c, target, floor)
            # the snap ends flush with the parent, so the parent itself
            # cannot count as a newly clipped cuboid
            others_no_parent = [n.cuboid for nid, n in sorted(graph.nodes.items())
                                if nid not in (node_id, parent)]
            if target < bottom and is_over_expanded(c, cand, others_no_parent, rcfg):
                notes.append("parent snap skipped: over-expanded")
            else:
                c = cand

    _apply_cuboid(node, c, layout, pcfg)
    after_cuboid, after_flags = _snapshot(node)
    return RefinementEvent(kind="local", node_id=node_id,
                           before_cuboid=before_cuboid, after_cuboid=after_cuboid,
                           before_flags=before_flags, after_flags=after_flags,
                           edges_before=edges, edges_after=edges,
                           notes=tuple(notes))


def rebuild(graph: StructureGraph, layout: RoomLayout,
            pcfg: ParseConfig) -> StructureGraph:
    return build_graph(layout, [graph.nodes[k] for k in sorted(graph.nodes)], pcfg)


def global_refine(graph: StructureGraph, node_id: int, label: str, model,
                  layout: RoomLayout, viewpoint: np.ndarray, pcfg: ParseConfig,
                  rcfg: RefineConfig | None = None,
                  geometry_changed: bool = True):
    """Rebuild after a local change, then resolve occluded floating objects.

    When the confirmed label is floor-supported, floating objects that the
    node likely occludes but does not likely support are extruded to the
    floor, one undoable event each. Returns (graph, events).
    """
    rcfg = rcfg or RefineConfig()
    events: list[RefinementEvent] = []
    if geometry_changed:
        graph = rebuild(graph, layout, pcfg)
    if label not in model.o_s:
        return graph, events
    node = graph.nodes[node_id]
    for fid in graph.floating_ids:
        if fid == node_id:
            continue
        target = graph.nodes[fid]
        if not likely_occludes(node, target, viewpoint, layout):
            continue
        if likely_supports(node, target, graph.nodes, layout, pcfg, rcfg):
            continue  # support/occlusion ambiguity resolved at approve-all
        before_cuboid, before_flags = _snapshot(target)
        edges_before = tuple(graph.sorted_edges())
        _apply_cuboid(target, extrude_bottom_to(target.cuboid, 0.0, layout.floor),
                      layout, pcfg)
        graph = rebuild(graph, layout, pcfg)
        after_cuboid, after_flags = _snapshot(target)
        events.append(RefinementEvent(
            kind="global-extrude", node_id=fid,
            before_cuboid=before_cuboid, after_cuboid=after_cuboid,
            before_flags=before_flags, after_flags=after_flags,
            edges_before=edges_before,
            edges_after=tuple(graph.sorted_edges())))
    return graph, events


def final_refine(graph: StructureGraph, model, layout: RoomLayout,
                 points_by_node: dict[int, np.ndarray], viewpoint: np.ndarray,
                 pcfg: ParseConfig, rcfg: RefineConfig | None = None):
    """Approve-all pass: local refinement everywhere (top-down level order),
    then floating objects either gain a physical supporter (expanding it)
    or are extruded to the floor. Returns (graph, events)."""
    rcfg = rcfg or RefineConfig()
    events: list[RefinementEvent] = []
    for level in graph.levels():
        for nid in level:
            node = graph.nodes[nid]
            ev = local_refine(graph, nid, node.label, model, layout,
                              points_by_node.get(nid), pcfg, rcfg)
            if ev.changed:
                events.append(ev)
    graph = rebuild(graph, layout, pcfg)
    if events:
        events[-1] = _with_edges_after(events[-1], graph)

    for fid in list(graph.floating_ids):
        if graph.parent_of(fid) is not None:
            continue  # gained a parent through an earlier expansion
        node = graph.nodes[fid]
        label = node.label
        supporters = [gid for gid in graph.ground_ids
                      if likely_supports(graph.nodes[gid], node, graph.nodes,
                                         layout, pcfg, rcfg)]
        best, best_ps = None, -1.0
        for gid in supporters:
            ps = model.p_s(graph.nodes[gid].label, label)
            if ps > best_ps + 1e-12:
                best, best_ps = gid, ps
        if label in model.o_s and (best is None or best_ps < rcfg.support_ps_threshold):
            before_cuboid, before_flags = _snapshot(node)
            edges_before = tuple(graph.sorted_edges())
            _apply_cuboid(node, extrude_bottom_to(node.cuboid, 0.0, layout.floor),
                          layout, pcfg)
            graph = rebuild(graph, layout, pcfg)
            after_cuboid, after_flags = _snapshot(node)
            events.append(RefinementEvent(
                kind="final-extrude", node_id=fid,
                before_cuboid=before_cuboid, after_cuboid=after_cuboid,
                before_flags=before_flags, after_flags=after_flags,
                edges_before=edges_before,
                edges_after=tuple(graph.sorted_edges())))
        elif best is not None and best_ps >= rcfg.support_ps_threshold:
            supporter = graph.nodes[best]
            expanded = expand_to_enclose(supporter.cuboid, node.rect, layout.frame)
            others = [n.cuboid for nid, n in sorted(graph.nodes.items())
                      if nid not in (best, fid)]
            if is_over_expanded(supporter.cuboid, expanded, others, rcfg):
                continue  # guarded; leave floating
            sup_before, sup_bflags = _snapshot(supporter)
            edges_before = tuple(graph.sorted_edges())
            _apply_cuboid(supporter, expanded, layout, pcfg)
            sup_after, sup_aflags = _snapshot(supporter)
            events.append(RefinementEvent(
                kind="final-expand", node_id=best,
                before_cuboid=sup_before, after_cuboid=sup_after,
                before_flags=sup_bflags, after_flags=sup_aflags,
                edges_before=edges_before, edges_after=edges_before))
            node_before, node_bflags = _snapshot(node)
            _apply_cuboid(node, extrude_bottom_to(
                node.cuboid, cuboid_top(supporter.cuboid, layout.floor),
                layout.floor), layout, pcfg)
            graph = rebuild(graph, layout, pcfg)
            node_after, node_aflags = _snapshot(node)
            events.append(RefinementEvent(
                kind="final-expand", node_id=fid,
                before_cuboid=node_before, after_cuboid=node_after,
                before_flags=node_bflags, after_flags=node_aflags,
                edges_before=edges_before,
                edges_after=tuple(graph.sorted_edges())))
    graph = rebuild(graph, layout, pcfg)
    if events:
        events[-1] = _with_edges_after(events[-1], graph)
    return graph, events


def _with_edges_after(ev: RefinementEvent, graph: StructureGraph) -> RefinementEvent:
    return RefinementEvent(kind=ev.kind, node_id=ev.node_id,
                           before_cuboid=ev.before_cuboid,
                           after_cuboid=ev.after_cuboid,
                           before_flags=ev.before_flags,
                           after_flags=ev.after_flags,
                           edges_before=ev.edges_before,
                           edges_after=tuple(graph.sorted_edges()),
                           notes=ev.notes)


def undo_event(graph: StructureGraph, event: RefinementEvent,
               layout: RoomLayout, pcfg: ParseConfig) -> StructureGraph:
    """Restore the event's before state (cuboid, flags, edge set)."""
    node = graph.nodes[event.node_id]
    node.cuboid = Cuboid.from_dict(event.before_cuboid)
    node.rect = cuboid_rect(node.cuboid, layout.frame)
    node.wall_contact, node.wall_align = event.before_flags
    graph.edges = {tuple(e) for e in event.edges_before}
    return graph


def apply_event(graph: StructureGraph, event: RefinementEvent,
                layout: RoomLayout, pcfg: ParseConfig) -> StructureGraph:
    """Replay a recorded event (after state)."""
    node = graph.nodes[event.node_id]
    node.cuboid = Cuboid.from_dict(event.after_cuboid)
    node.rect = cuboid_rect(node.cuboid, layout.frame)
    node.wall_contact, node.wall_align = event.after_flags
    graph.edges = {tuple(e) for e in event.edges_after}
    return graph
