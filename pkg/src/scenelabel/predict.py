"""Label-assignment energy and ordered per-object suggestion lists.

Suggestions are built greedily over the support hierarchy: floor-supported
objects are ranked over the floor-supported category set, supported objects
follow their parent's suggestions, and floating objects are resolved by
virtual extrusion (to the floor, or to the most probable supporter's top).

Any object with a ``categories`` tuple, an ``o_s`` set, ``p_g(label, area,
height)``, ``p_s(parent, child)`` and a ``config.eps`` satisfies the model
protocol; tests substitute hand-built tables for the trained priors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import cuboid_top, extrude_bottom_to, rect_distance, rect_intersection_area
from .priors import cuboid_features
from .refine import RefineConfig, likely_supports
from .scene_parse import ParseConfig, RoomLayout
from .structure_graph import FLOOR_ID, StructureGraph


class IncompleteAssignment(ValueError):
    pass


@dataclass(frozen=True)
class Suggestion:
    label: str
    score: float


def _log(p: float, eps: float) -> float:
    return math.log(max(p, eps))


def energy(labels: dict[int, str], graph: StructureGraph, model) -> float:
    """Negative log of the factored assignment probability.

    Ground and floating nodes carry a unary size term; every support edge
    (floor edges included) adds the child's size term plus the support
    frequency between the two labels. Ground nodes therefore count their
    unary twice, once directly and once through their floor edge.
    """
    missing = sorted(n for n in graph.nodes if n not in labels)
    if missing:
        raise IncompleteAssignment(f"nodes without labels: {missing}")
    eps = model.config.eps
    total = 0.0
    for nid in graph.ground_ids + graph.floating_ids:
        area, height = cuboid_features(graph.nodes[nid].cuboid)
        total -= _log(model.p_g(labels[nid], area, height), eps)
    for p, c in sorted(graph.edges):
        lp = "floor" if p == FLOOR_ID else labels[p]
        area, height = cuboid_features(graph.nodes[c].cuboid)
        total -= (_log(model.p_g(labels[c], area, height), eps)
                  + _log(model.p_s(lp, labels[c]), eps))
    return total


def suggest_ground(graph: StructureGraph, nid: int, model, m: int,
                   virtual_cuboid=None, has_children: bool | None = None) -> list[Suggestion]:
    """Rank floor-supported categories for a ground object.

    Supporting objects (with children) also score how well each candidate
    label supports the non-floor-supported categories. An empty
    floor-supported set falls back to ranking all categories by size alone.
    """
    node = graph.nodes[nid]
    cub = virtual_cuboid if virtual_cuboid is not None else node.cuboid
    area, height = cuboid_features(cub)
    eps = model.config.eps
    cats = sorted(model.categories)
    o_s = set(model.o_s)
    pool = sorted(o_s) if o_s else cats
    if has_children is None:
        has_children = bool(graph.children_of(nid))
    others = [c for c in cats if c not in o_s]
    entries = []
    for label in pool:
        f = _log(model.p_g(label, area, height), eps)
        if has_children and o_s:
            f += sum(_log(model.p_s(label, k), eps) for k in others)
        entries.append((f, label))
    entries.sort(key=lambda t: (-t[0], t[1]))
    return [Suggestion(label, f) for f, label in entries[:m]]


def suggest_supported(features: tuple[float, float], parent_labels: list[str],
                      model, m: int) -> list[Suggestion]:
    """One best candidate per parent label, in the parent's order.

    Candidates are non-floor-supported categories with nonzero support
    frequency under the parent label; when none exist the size prior alone
    picks the entry. Duplicates are skipped. Stored scores are the cost
    values discounted by parent rank so they decrease along the list.
    """
    area, height = features
    eps = model.config.eps
    cats = sorted(model.categories)
    pool = [c for c in cats if c not in set(model.o_s)] or cats
    out: list[Suggestion] = []
    seen: set[str] = set()
    for rank, lp in enumerate(parent_labels):
        cands = [l for l in pool if model.p_s(lp, l) != 0]
        if cands:
            scored = [( _log(model.p_g(l, area, height), eps)
                        + _log(model.p_s(lp, l), eps), l) for l in cands]
        else:
            scored = [(_log(model.p_g(l, area, height), eps), l) for l in pool]
        scored.sort(key=lambda t: (-t[0], t[1]))
        f, best = scored[0]
        if best not in seen:
            seen.add(best)
            # 100 exceeds any cost spread at the shared log floor
            out.append(Suggestion(best, f - 100.0 * rank))
        if len(out) >= m:
            break
    return out


def suggest_floating(graph: StructureGraph, nid: int, model, m: int,
                     layout: RoomLayout, pcfg: ParseConfig, rcfg: RefineConfig,
                     list_source) -> list[Suggestion]:
    """Resolve a floating object by virtual extrusion.

    With no likely supporter nearby the object is treated as an occluded
    ground object. Otherwise half the list comes from ranking against the
    most probable supporter (largest footprint overlap) and half from the
    occluded-ground reading; scores are merge ranks.
    """
    node = graph.nodes[nid]
    floating = set(graph.floating_ids)
    non_floating = [graph.nodes[i] for i in sorted(graph.nodes) if i not in floating]
    supporters = [o for o in non_floating
                  if likely_supports(o, node, graph.nodes, layout, pcfg, rcfg)]
    has_children = bool(graph.children_of(nid))
    if not supporters:
        virtual = extrude_bottom_to(node.cuboid, 0.0, layout.floor)
        return suggest_ground(graph, nid, model, m, virtual_cuboid=virtual,
                              has_children=has_children)

    def overlap_key(o):
        return (-rect_intersection_area(o.rect, node.rect),
                rect_distance(o.rect, node.rect), o.id)

    parent = min(supporters, key=overlap_key)
    lifted = extrude_bottom_to(node.cuboid, cuboid_top(parent.cuboid, layout.floor),
                               layout.floor)
    parent_labels = [s.label for s in list_source(parent.id)]
    s1 = suggest_supported(cuboid_features(lifted), parent_labels, model, m)
    grounded = extrude_bottom_to(node.cuboid, 0.0, layout.floor)
    s2 = suggest_ground(graph, nid, model, m, virtual_cuboid=grounded,
                        has_children=has_children)
    k1 = m // 2
    k2 = m - k1
    ordered = ([s.label for s in s1[:k1]] + [s.label for s in s2[:k2]]
               + [s.label for s in s1[k1:]] + [s.label for s in s2[k2:]])
    labels: list[str] = []
    for label in ordered:
        if label not in labels:
            labels.append(label)
        if len(labels) >= m:
            break
    return [Suggestion(label, float(-i)) for i, label in enumerate(labels)]


def suggest_all(graph: StructureGraph, model, m: int, layout: RoomLayout,
                pcfg: ParseConfig | None = None,
                rcfg: RefineConfig | None = None,
                confirmed: dict[int, str] | None = None) -> dict[int, list[Suggestion]]:
    """Level-order suggestion pass: ground trees, then floating objects and
    their descendants. Confirmed nodes keep their label and only feed their
    children's candidate sets."""
    pcfg = pcfg or ParseConfig()
    rcfg = rcfg or RefineConfig()
    confirmed = dict(confirmed or {})
    out: dict[int, list[Suggestion]] = {}

    def list_for(nid: int) -> list[Suggestion]:
        if nid in confirmed:
            return [Suggestion(confirmed[nid], 0.0)]
        return out[nid]

    def process_descendants(roots: list[int]) -> None:
        layer = sorted({c for nid in roots for c in graph.children_of(nid)})
        while layer:
            for nid in layer:
                if nid not in confirmed:
                    parent = graph.parent_of(nid)
                    out[nid] = suggest_supported(
                        cuboid_features(graph.nodes[nid].cuboid),
                        [s.label for s in list_for(parent)], model, m)
            layer = sorted({c for nid in layer for c in graph.children_of(nid)})

    for nid in graph.ground_ids:
        if nid not in confirmed:
            out[nid] = suggest_ground(graph, nid, model, m)
    process_descendants(graph.ground_ids)
    for nid in graph.floating_ids:
        if nid not in confirmed:
            out[nid] = suggest_floating(graph, nid, model, m, layout, pcfg,
                                        rcfg, list_for)
    process_descendants(graph.floating_ids)
    # the support forest covers every node: anything unreachable from the
    # roots would violate the graph invariants
    assert set(out) | set(confirmed) >= set(graph.nodes)
    return out
