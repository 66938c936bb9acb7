import { describe, expect, it } from "vitest";

import {
  applyDelta,
  childrenByParent,
  floatingIds,
  fromSessionState,
  topLabel,
} from "../src/state.js";
import type { ActionDelta, NodeState, SessionState } from "../src/types.js";

function node(id: number, overrides: Partial<NodeState> = {}): NodeState {
  return {
    id,
    label: null,
    confirmed: false,
    suggestions: [
      { label: "bed", score: -0.1 },
      { label: "desk", score: -0.9 },
    ],
    wall_contact: false,
    wall_align: false,
    polygon: [
      [0, 0],
      [10, 0],
      [10, 10],
      [0, 10],
    ],
    mask_rle: [0, 4],
    ...overrides,
  };
}

function sessionState(nodes: NodeState[], edges: number[][]): SessionState {
  return {
    session_id: "s1",
    frame_id: "f1",
    phase: "labeling",
    m: 6,
    image_size: [240, 320],
    nodes,
    edges,
    model_hash: "abc",
    warnings: [],
    n_events: 0,
    record: null,
  };
}

describe("view state", () => {
  it("builds from a full session state", () => {
    const view = fromSessionState(sessionState([node(0), node(1)], [[-1, 0], [0, 1]]));
    expect(view.nodes.size).toBe(2);
    expect(view.edges).toEqual([[-1, 0], [0, 1]]);
    expect(view.selected).toBeNull();
  });

  it("applying a delta replaces nodes and edges", () => {
    const view = fromSessionState(sessionState([node(0), node(1)], [[-1, 0]]));
    view.selected = 1;
    const delta: ActionDelta = {
      phase: "labeling",
      nodes: [node(0, { confirmed: true, label: "bed" }), node(1)],
      edges: [
        [-1, 0],
        [0, 1],
      ],
      confirmed: { "0": "bed" },
    };
    const next = applyDelta(view, delta);
    expect(next.nodes.get(0)!.confirmed).toBe(true);
    expect(next.edges.length).toBe(2);
    expect(next.selected).toBe(1); // survives because node 1 still exists
  });

  it("selection resets when the node disappears", () => {
    const view = fromSessionState(sessionState([node(0), node(1)], []));
    view.selected = 1;
    const next = applyDelta(view, {
      phase: "labeling",
      nodes: [node(0)],
      edges: [],
    });
    expect(next.selected).toBeNull();
  });

  it("reconstructing from a refetched full state matches delta application", () => {
    const view = fromSessionState(sessionState([node(0), node(1)], [[-1, 0]]));
    const delta: ActionDelta = {
      phase: "done",
      nodes: [node(0, { label: "bed", confirmed: true })],
      edges: [[-1, 0]],
    };
    const afterDelta = applyDelta(view, delta);
    const refetched = fromSessionState(
      sessionState([node(0, { label: "bed", confirmed: true })], [[-1, 0]]),
    );
    refetched.phase = "done";
    expect([...afterDelta.nodes.entries()]).toEqual([...refetched.nodes.entries()]);
    expect(afterDelta.edges).toEqual(refetched.edges);
    expect(afterDelta.phase).toEqual(refetched.phase);
  });

  it("derives tree structure and floating set", () => {
    const view = fromSessionState(
      sessionState([node(0), node(1), node(2)], [[-1, 0], [0, 1]]),
    );
    const children = childrenByParent(view);
    expect(children.get(-1)).toEqual([0]);
    expect(children.get(0)).toEqual([1]);
    expect(floatingIds(view)).toEqual([2]);
  });

  it("top label prefers the assigned label", () => {
    expect(topLabel(node(0))).toBe("bed");
    expect(topLabel(node(0, { label: "sofa" }))).toBe("sofa");
    expect(topLabel(node(0, { suggestions: [] }))).toBe("?");
  });
});
