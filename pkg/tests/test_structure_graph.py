import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenelabel.geometry import Cuboid, FloorFrame, Plane, cuboid_rect
from scenelabel.scene_parse import ParseConfig, RoomLayout
from scenelabel.structure_graph import (
    FLOOR_ID, NodeSetMismatch, SGNode, StructureGraph, build_graph,
    compute_wall_flags, edge_edit_distance, is_supporting,
)

CFG = ParseConfig()
FLOOR = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
FRAME = FloorFrame.from_plane(FLOOR, wall_normal=np.array([1.0, 0.0, 0.0]))


def layout_with_walls(walls=((1.0, 0.0, 0.0, 0.0),)):
    planes = [Plane(np.array(w[:3]), w[3]) for w in walls]
    return RoomLayout(floor=FLOOR, floor_segments=(), walls=planes,
                      wall_segments=[() for _ in planes], frame=FRAME)


def box(cx, cy, z_bottom, sx, sy, sz, yaw=0.0):
    fw = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    return Cuboid(np.array([cx, cy, z_bottom + sz / 2]), np.array([0, 0, 1.0]),
                  fw, np.array([sx / 2, sy / 2, sz / 2]))


def node(nid, cuboid):
    n = SGNode(id=nid, cuboid=cuboid)
    n.rect = cuboid_rect(cuboid, FRAME)
    return n


class TestWallFlags:
    def test_flush_parallel(self):
        layout = layout_with_walls()
        # wall x=0; cuboid back face at x=0.0, aligned
        c = box(0.25, 1.0, 0.0, 0.5, 0.8, 1.0)
        w_c, w_a = compute_wall_flags(c, layout, CFG)
        assert (w_c, w_a) == (True, True)

    def test_10cm_20deg(self):
        layout = layout_with_walls()
        c = box(0.35, 1.0, 0.0, 0.5, 0.8, 1.0, yaw=np.radians(20))
        w_c, w_a = compute_wall_flags(c, layout, CFG)
        assert (w_c, w_a) == (True, True)

    def test_far_from_wall(self):
        layout = layout_with_walls()
        c = box(1.75, 1.0, 0.0, 0.5, 0.8, 1.0, yaw=np.radians(10))
        w_c, w_a = compute_wall_flags(c, layout, CFG)
        assert not w_c
        assert w_a  # angle still within tolerance

    def test_angle_boundary(self):
        layout = layout_with_walls()
        ok = compute_wall_flags(box(0.3, 1.0, 0.0, 0.5, 0.8, 1.0,
                                    yaw=np.radians(29.9)), layout, CFG)
        bad = compute_wall_flags(box(0.3, 1.0, 0.0, 0.5, 0.8, 1.0,
                                     yaw=np.radians(30.1)), layout, CFG)
        assert ok[1] is True
        assert bad[1] is False

    def test_distance_boundary(self):
        layout = layout_with_walls()
        near = box(0.149 + 0.25, 1.0, 0.0, 0.5, 0.8, 1.0)
        far = box(0.151 + 0.25, 1.0, 0.0, 0.5, 0.8, 1.0)
        assert compute_wall_flags(near.cuboid if hasattr(near, "cuboid") else near,
                                  layout, CFG)[0] is True
        assert compute_wall_flags(far, layout, CFG)[0] is False

    def test_no_walls_defaults_false(self):
        layout = layout_with_walls(walls=())
        assert compute_wall_flags(box(0.3, 1.0, 0.0, 0.5, 0.8, 1.0),
                                  layout, CFG) == (False, False)


class TestIsSupporting:
    def test_resting_centered(self):
        base = node(0, box(1, 1, 0.0, 1.0, 1.0, 0.5))
        top = node(1, box(1, 1, 0.5, 0.4, 0.4, 0.2))
        assert is_supporting(base, top, FLOOR, CFG)

    def test_overlap_31_percent(self):
        base = node(0, box(1.0, 1.0, 0.0, 1.0, 1.0, 0.5))
        # shift so intersection is exactly 31% of top's footprint, center outside
        top = node(1, box(1.0 + 0.5 + 0.5 - 0.31, 1.0, 0.5, 1.0, 1.0, 0.2))
        inter = 0.31
        assert is_supporting(base, top, FLOOR, CFG)

    def test_overlap_29_percent(self):
        base = node(0, box(1.0, 1.0, 0.0, 1.0, 1.0, 0.5))
        top = node(1, box(1.0 + 0.5 + 0.5 - 0.29, 1.0, 0.5, 1.0, 1.0, 0.2))
        assert not is_supporting(base, top, FLOOR, CFG)

    def test_floating_above(self):
        base = node(0, box(1, 1, 0.0, 1.0, 1.0, 0.5))
        top = node(1, box(1, 1, 1.0, 0.4, 0.4, 0.2))  # 0.5m gap
        assert not is_supporting(base, top, FLOOR, CFG)

    def test_containment(self):
        outer = node(0, box(1, 1, 0.0, 1.0, 1.0, 1.0))
        inner = node(1, box(1, 1, 0.3, 0.3, 0.3, 0.3))
        assert is_supporting(outer, inner, FLOOR, CFG)

    def test_vertical_sensitivity(self):
        base = node(0, box(1, 1, 0.0, 1.0, 1.0, 0.5))
        top = node(1, box(1, 1, 0.5, 0.4, 0.4, 0.2))
        assert is_supporting(base, top, FLOOR, CFG)
        lifted = node(1, box(1, 1, 0.5 + 2 * CFG.d_t, 0.4, 0.4, 0.2))
        assert not is_supporting(base, lifted, FLOOR, CFG)

    def test_gap_boundary(self):
        base = node(0, box(1, 1, 0.0, 1.0, 1.0, 0.5))
        near = node(1, box(1, 1, 0.5 + 0.149, 0.4, 0.4, 0.2))
        far = node(1, box(1, 1, 0.5 + 0.151, 0.4, 0.4, 0.2))
        assert is_supporting(base, near, FLOOR, CFG)
        assert not is_supporting(base, far, FLOOR, CFG)


class TestBuildGraph:
    def bedroom(self):
        layout = layout_with_walls()
        bed = node(0, box(1.0, 1.0, 0.0, 2.0, 1.5, 0.5))
        pil1 = node(1, box(0.6, 0.8, 0.5, 0.5, 0.35, 0.15))
        pil2 = node(2, box(0.6, 1.3, 0.5, 0.5, 0.35, 0.15))
        stand = node(3, box(2.6, 0.6, 0.0, 0.5, 0.5, 0.6))
        return layout, [bed, pil1, pil2, stand]

    def test_bedroom_edges(self):
        layout, nodes = self.bedroom()
        g = build_graph(layout, nodes, CFG)
        assert g.edges == {(FLOOR_ID, 0), (FLOOR_ID, 3), (0, 1), (0, 2)}
        assert g.ground_ids == [0, 3]
        assert g.floating_ids == []

    def test_empty_scene(self):
        g = build_graph(layout_with_walls(), [], CFG)
        assert g.edges == set()
        assert g.nodes == {}

    def test_floor_beats_partial_overlap(self):
        layout = layout_with_walls()
        table = node(0, box(1.0, 1.0, 0.0, 1.0, 1.0, 0.1))
        # bottom of obj is near floor (within d_t) AND on the table edge
        obj = node(1, box(1.4, 1.0, 0.1, 0.6, 0.6, 0.4))
        g = build_graph(layout, [table, obj], CFG)
        assert (FLOOR_ID, 1) in g.edges  # floor wins: full footprint area

    def test_contained_beats_floor(self):
        layout = layout_with_walls()
        shelf = node(0, box(1.0, 1.0, 0.0, 1.2, 1.2, 1.0))
        # low object fully inside the shelf volume, bottom near floor
        item = node(1, box(1.0, 1.0, 0.1, 0.4, 0.4, 0.3))
        g = build_graph(layout, [shelf, item], CFG)
        assert (0, 1) in g.edges

    def test_floating_set(self):
        layout = layout_with_walls()
        a = node(0, box(1.0, 1.0, 0.0, 1.0, 1.0, 0.5))
        b = node(1, box(1.0, 1.0, 1.2, 0.4, 0.4, 0.2))  # hovers
        g = build_graph(layout, [a, b], CFG)
        assert g.floating_ids == [1]
        assert g.ground_ids == [0]

    def test_order_invariance(self):
        layout, nodes = self.bedroom()
        g1 = build_graph(layout, nodes, CFG)
        g2 = build_graph(layout, list(reversed(nodes)), CFG)
        assert g1.edges == g2.edges

    @given(st.integers(min_value=0, max_value=2000))
    @settings(max_examples=60, deadline=None)
    def test_invariants_fuzz(self, seed):
        rng = np.random.default_rng(seed)
        layout = layout_with_walls()
        n = int(rng.integers(1, 7))
        nodes = []
        for i in range(n):
            nodes.append(node(i, box(rng.uniform(0, 3), rng.uniform(0, 3),
                                     rng.uniform(0, 1.2), rng.uniform(0.2, 1.5),
                                     rng.uniform(0.2, 1.5), rng.uniform(0.1, 1.0),
                                     yaw=rng.uniform(0, np.pi))))
        g = build_graph(layout, nodes, CFG)
        # each non-floor node has at most one incoming edge
        children = [c for _, c in g.edges]
        assert len(children) == len(set(children))
        # acyclic: walking parents always terminates at a root
        for nid in g.nodes:
            seen = set()
            cur = nid
            while True:
                p = g.parent_of(cur)
                if p is None or p == FLOOR_ID:
                    break
                assert p not in seen
                seen.add(p)
                cur = p
        # V_g and V_f partition roots
        assert not (set(g.ground_ids) & set(g.floating_ids))
        covered = set(g.ground_ids) | set(g.floating_ids) | set(g.supported_ids)
        assert covered == set(g.nodes)

    def test_levels(self):
        layout, nodes = self.bedroom()
        g = build_graph(layout, nodes, CFG)
        assert g.levels() == [[0, 3], [1, 2]]


class TestEditDistance:
    def graph(self, edges, n=4):
        nodes = {i: SGNode(id=i, cuboid=box(i, 0, 0, 0.5, 0.5, 0.5))
                 for i in range(n)}
        return StructureGraph(nodes=nodes, edges=set(edges))

    def test_identical(self):
        g = self.graph({(FLOOR_ID, 0), (0, 1)})
        assert edge_edit_distance(g, self.graph({(FLOOR_ID, 0), (0, 1)})) == 0

    def test_reparent_costs_two(self):
        g1 = self.graph({(FLOOR_ID, 0), (0, 1)})
        g2 = self.graph({(FLOOR_ID, 0), (FLOOR_ID, 1)})
        assert edge_edit_distance(g1, g2) == 2

    def test_empty_vs_n(self):
        g1 = self.graph(set())
        g2 = self.graph({(FLOOR_ID, 0), (FLOOR_ID, 1), (1, 2)})
        assert edge_edit_distance(g1, g2) == 3

    def test_node_mismatch(self):
        with pytest.raises(NodeSetMismatch):
            edge_edit_distance(self.graph(set(), n=3), self.graph(set(), n=4))

    @given(st.integers(min_value=0, max_value=5000))
    @settings(max_examples=60, deadline=None)
    def test_metric_properties(self, seed):
        rng = np.random.default_rng(seed)
        all_edges = [(p, c) for c in range(4) for p in [FLOOR_ID, *range(4)] if p != c]

        def rand_graph():
            k = int(rng.integers(0, 6))
            idx = rng.choice(len(all_edges), size=k, replace=False)
            return self.graph({all_edges[i] for i in idx})

        a, b, c = rand_graph(), rand_graph(), rand_graph()
        assert edge_edit_distance(a, a) == 0
        assert edge_edit_distance(a, b) == edge_edit_distance(b, a)
        assert (edge_edit_distance(a, c)
                <= edge_edit_distance(a, b) + edge_edit_distance(b, c))


class TestSerialization:
    def test_roundtrip(self):
        layout = layout_with_walls()
        nodes = [node(0, box(1, 1, 0.0, 1.0, 1.0, 0.5)),
                 node(1, box(1, 1, 0.5, 0.4, 0.4, 0.2))]
        g = build_graph(layout, nodes, CFG)
        g.nodes[0].label = "bed"
        d = g.to_dict()
        back = StructureGraph.from_dict(d)
        assert back.to_dict() == d
