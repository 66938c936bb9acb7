"""Directed support forest over cuboids, wall flags, graph edit error.

Nodes are objects; the distinguished floor root has id -1. Every non-floor
node has at most one incoming (supporting) edge and cycles are rejected by
dropping the lower-overlap edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    Cuboid, Rect2, cuboid_bottom, cuboid_contains, cuboid_rect, cuboid_top,
    point_in_rect, rect_intersection_area,
)
from .scene_parse import ParseConfig, RoomLayout

FLOOR_ID = -1

GRAPH_SCHEMA = "structure-graph/1"


class NodeSetMismatch(ValueError):
    pass


@dataclass
class SGNode:
    id: int
    cuboid: Cuboid
    rect: Rect2 | None = None
    wall_contact: bool = False
    wall_align: bool = False
    label: str | None = None
    suggestions: list | None = None      # list[Suggestion], filled by predict
    segment_ids: tuple[int, ...] = ()


@dataclass
class StructureGraph:
    nodes: dict[int, SGNode]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def parent_of(self, nid: int) -> int | None:
        for p, c in self.edges:
            if c == nid:
                return p
        return None

    def children_of(self, nid: int) -> list[int]:
        return sorted(c for p, c in self.edges if p == nid)

    @property
    def ground_ids(self) -> list[int]:
        return self.children_of(FLOOR_ID)

    @property
    def floating_ids(self) -> list[int]:
        parented = {c for _, c in self.edges}
        return sorted(n for n in self.nodes if n not in parented)

    @property
    def supported_ids(self) -> list[int]:
        return sorted(c for p, c in self.edges if p != FLOOR_ID)

    def levels(self) -> list[list[int]]:
        """Forest levels: ground and floating roots first, children after."""
        depth: dict[int, int] = {}
        roots = sorted(set(self.ground_ids) | set(self.floating_ids))
        frontier = roots
        d = 0
        while frontier:
            for nid in frontier:
                depth[nid] = d
            nxt = []
            for nid in frontier:
                nxt.extend(self.children_of(nid))
            frontier = sorted(set(nxt) - set(depth))
            d += 1
        out: list[list[int]] = [[] for _ in range(d)] if d else []
        for nid, lv in depth.items():
            out[lv].append(nid)
        return [sorted(level) for level in out]

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_dict(self) -> dict:
        nodes = []
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            nodes.append({
                "id": n.id,
                "cuboid": n.cuboid.to_dict(),
                "rect": n.rect.to_dict() if n.rect is not None else None,
                "wall_contact": n.wall_contact,
                "wall_align": n.wall_align,
                "label": n.label,
                "suggestions": ([{"label": s.label, "score": s.score}
                                 for s in n.suggestions]
                                if n.suggestions is not None else None),
                "segment_ids": list(n.segment_ids),
            })
        return {"schema": GRAPH_SCHEMA, "nodes": nodes,
                "edges": [list(e) for e in self.sorted_edges()]}

    @staticmethod
    def from_dict(d: dict) -> "StructureGraph":
        from .predict import Suggestion
        if d.get("schema") != GRAPH_SCHEMA:
            raise ValueError(f"expected {GRAPH_SCHEMA}, got {d.get('schema')}")
        nodes = {}
        for nd in d["nodes"]:
            sugg = None
            if nd["suggestions"] is not None:
                sugg = [Suggestion(s["label"], s["score"]) for s in nd["suggestions"]]
            nodes[nd["id"]] = SGNode(
                id=nd["id"], cuboid=Cuboid.from_dict(nd["cuboid"]),
                rect=Rect2.from_dict(nd["rect"]) if nd["rect"] else None,
                wall_contact=nd["wall_contact"], wall_align=nd["wall_align"],
                label=nd["label"], suggestions=sugg,
                segment_ids=tuple(nd["segment_ids"]))
        return StructureGraph(nodes=nodes,
                              edges={(int(p), int(c)) for p, c in d["edges"]})


# ---------------------------------------------------------------------------
# wall flags


def _side_faces(c: Cuboid):
    """(outward normal, 4 corners) for the four vertical faces."""
    faces = []
    axes = [c.forward, c.side]
    for k, axis in enumerate(axes):
        other = axes[1 - k]
        he_a, he_o = c.half_extents[k], c.half_extents[1 - k]
        for sign in (1.0, -1.0):
            fc = c.center + sign * he_a * axis
            corners = np.array([fc + so * he_o * other + su * c.half_extents[2] * c.up
                                for so in (-1, 1) for su in (-1, 1)])
            faces.append((sign * axis, corners))
    return faces


def nearest_wall_face(c: Cuboid, walls: list,):
    """Back face = vertical face closest to any wall.

    Returns (face normal, face corners, wall index, distance)."""
    best = None
    for wi, wall in enumerate(walls):
        for normal, corners in _side_faces(c):
            d = float(np.min(np.abs(wall.signed_distance(corners))))
            if best is None or d < best[3] - 1e-12:
                best = (normal, corners, wi, d)
    return best


def compute_wall_flags(c: Cuboid, layout: RoomLayout, cfg: ParseConfig):
    """(wall_contact, wall_align) from the back face vs the nearest wall."""
    if not layout.walls:
        return False, False
    normal, _, wi, dist = nearest_wall_face(c, layout.walls)
    w_c = dist <= cfg.d_t
    cosang = abs(float(normal @ layout.walls[wi].normal))
    w_a = cosang >= cfg.cos_parallel
    return bool(w_c), bool(w_a)


# ---------------------------------------------------------------------------
# support inference


def is_supporting(node_i: SGNode, node_j: SGNode, floor, cfg: ParseConfig) -> bool:
    """True when i's top carries j's bottom with enough footprint overlap,
    or j is completely contained in i."""
    if cuboid_contains(node_i.cuboid, node_j.cuboid):
        return True
    gap = abs(cuboid_top(node_i.cuboid, floor) - cuboid_bottom(node_j.cuboid, floor))
    if gap > cfg.d_t:
        return False
    if point_in_rect(node_j.rect.center, node_i.rect):
        return True
    overlap = rect_intersection_area(node_i.rect, node_j.rect)
    return overlap > 0.3 * node_j.rect.area()


def build_graph(layout: RoomLayout, nodes: list[SGNode],
                cfg: ParseConfig | None = None) -> StructureGraph:
    """Assemble the support forest.

    Parent conflicts resolve to the largest intersecting area; the floor
    competes with the child's full footprint area; containment outranks the
    floor at equal area. Edges that would close a cycle are rejected in
    descending area order, so the lower-overlap edge of a cycle is dropped.
    """
    cfg = cfg or ParseConfig()
    floor = layout.floor
    for n in nodes:
        n.rect = cuboid_rect(n.cuboid, layout.frame)
        n.wall_contact, n.wall_align = compute_wall_flags(n.cuboid, layout, cfg)
    by_id = {n.id: n for n in nodes}
    candidates = []  # (area, kind, parent, child); kind: 2 contained, 1 floor, 0 overlap
    for j in sorted(by_id):
        nj = by_id[j]
        if abs(cuboid_bottom(nj.cuboid, floor)) <= cfg.d_t:
            candidates.append((nj.rect.area(), 1, FLOOR_ID, j))
        for i in sorted(by_id):
            if i == j:
                continue
            ni = by_id[i]
            if is_supporting(ni, nj, floor, cfg):
                area = rect_intersection_area(ni.rect, nj.rect)
                kind = 2 if cuboid_contains(ni.cuboid, nj.cuboid) else 0
                candidates.append((area, kind, i, j))
    candidates.sort(key=lambda t: (-t[0], -t[1], t[2], t[3]))
    parent: dict[int, int] = {}
    for area, kind, p, c in candidates:
        if c in parent:
            continue
        # reject if p is a descendant of c (would close a cycle)
        anc = p
        cyclic = False
        while anc in parent:
            anc = parent[anc]
            if anc == c:
                cyclic = True
                break
        if cyclic:
            continue
        parent[c] = p
    edges = {(p, c) for c, p in parent.items()}
    return StructureGraph(nodes=dict(sorted(by_id.items())), edges=edges)


def edge_edit_distance(g: StructureGraph, g_gt: StructureGraph) -> int:
    """Edge insertions + deletions between graphs over the same node set."""
    if set(g.nodes) != set(g_gt.nodes):
        raise NodeSetMismatch(f"{sorted(g.nodes)} vs {sorted(g_gt.nodes)}")
    return len(g.edges ^ g_gt.edges)
