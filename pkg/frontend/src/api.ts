// Thin fetch client for the annotation service. One in-flight action per
// session; callers see every action they performed in `actionLog` so a run
// can be replayed verbatim.

import type { ActionDelta, ActionPayload, SessionState } from "./types.js";

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    const body = await res.text();
    throw new Error(`HTTP ${res.status}: ${body}`);
  }
  return (await res.json()) as T;
}

export class SessionClient {
  readonly baseUrl: string;
  sessionId: string | null = null;
  actionLog: ActionPayload[] = [];
  private inflight = false;

  constructor(baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  async createSession(frameId: string, masks?: number[][], m?: number): Promise<SessionState> {
    const body: Record<string, unknown> = { frame_id: frameId };
    if (masks) body.masks = masks;
    if (m) body.m = m;
    const state = await asJson<SessionState>(
      await fetch(`${this.baseUrl}/sessions`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    this.sessionId = state.session_id;
    return state;
  }

  async fetchState(): Promise<SessionState> {
    return asJson<SessionState>(
      await fetch(`${this.baseUrl}/sessions/${this.sessionId}`),
    );
  }

  async act(action: ActionPayload): Promise<ActionDelta> {
    if (!this.sessionId) throw new Error("no session");
    if (this.inflight) throw new Error("action already in flight");
    this.inflight = true;
    try {
      const delta = await asJson<ActionDelta>(
        await fetch(`${this.baseUrl}/sessions/${this.sessionId}/actions`, {
          method: "POST",
          headers: { "content-type": "application/json" },
          body: JSON.stringify(action),
        }),
      );
      this.actionLog.push(action);
      return delta;
    } finally {
      this.inflight = false;
    }
  }

  confirm(nodeId: number) {
    return this.act({ kind: "confirm", node_id: nodeId });
  }

  reorder(nodeId: number, label: string) {
    return this.act({ kind: "reorder", node_id: nodeId, label });
  }

  typeLabel(nodeId: number, label: string) {
    return this.act({ kind: "type", node_id: nodeId, label });
  }

  approveAll() {
    return this.act({ kind: "approve_all" });
  }

  undo() {
    return this.act({ kind: "undo" });
  }

  scribble(strokes: ActionPayload["strokes"]) {
    return this.act({ kind: "scribble", strokes });
  }

  colorUrl(frameId: string): string {
    return `${this.baseUrl}/frames/${frameId}/color`;
  }

  overlayUrl(frameId: string): string {
    return `${this.baseUrl}/frames/${frameId}/overlay`;
  }
}
