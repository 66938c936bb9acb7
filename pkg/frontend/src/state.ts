// Client-side view state: a pure reduction of (last full state, acknowledged
// deltas). Re-fetching the full state must yield an identical render input.

import type { ActionDelta, NodeState, SessionState } from "./types.js";

export interface ViewState {
  sessionId: string;
  frameId: string;
  phase: string;
  nodes: Map<number, NodeState>;
  edges: number[][];
  selected: number | null;
  pendingStrokes: { pixels: number[][]; kind: "foreground" | "background" }[];
}

export function fromSessionState(state: SessionState): ViewState {
  return {
    sessionId: state.session_id,
    frameId: state.frame_id,
    phase: state.phase,
    nodes: new Map(state.nodes.map((n) => [n.id, n])),
    edges: state.edges.map((e) => [...e]),
    selected: null,
    pendingStrokes: [],
  };
}

export function applyDelta(view: ViewState, delta: ActionDelta): ViewState {
  const nodes = new Map<number, NodeState>(
    delta.nodes.map((n) => [n.id, n]),
  );
  return {
    ...view,
    phase: delta.phase,
    nodes,
    edges: delta.edges.map((e) => [...e]),
    selected:
      view.selected !== null && nodes.has(view.selected) ? view.selected : null,
    pendingStrokes: [],
  };
}

export function topLabel(node: NodeState): string {
  if (node.label) return node.label;
  return node.suggestions.length ? node.suggestions[0].label : "?";
}

// Children per parent id (-1 is the floor root), sorted for stable rendering.
export function childrenByParent(view: ViewState): Map<number, number[]> {
  const out = new Map<number, number[]>();
  for (const [parent, child] of view.edges) {
    const list = out.get(parent) ?? [];
    list.push(child);
    out.set(parent, list);
  }
  for (const list of out.values()) list.sort((a, b) => a - b);
  return out;
}

export function floatingIds(view: ViewState): number[] {
  const parented = new Set(view.edges.map(([, child]) => child));
  return [...view.nodes.keys()].filter((id) => !parented.has(id)).sort((a, b) => a - b);
}
