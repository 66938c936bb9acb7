// Wire types mirroring the service's response models.

export interface Suggestion {
  label: string;
  score: number;
}

export interface NodeState {
  id: number;
  label: string | null;
  confirmed: boolean;
  suggestions: Suggestion[];
  wall_contact: boolean;
  wall_align: boolean;
  polygon: number[][];
  mask_rle: number[];
}

export interface SessionState {
  session_id: string;
  frame_id: string;
  phase: "segmenting" | "labeling" | "done";
  m: number;
  image_size: number[];
  nodes: NodeState[];
  edges: number[][];
  model_hash: string;
  warnings: string[];
  n_events: number;
  record: Record<string, unknown> | null;
}

export interface ActionDelta {
  phase: string;
  nodes: NodeState[];
  edges: number[][];
  confirmed?: Record<string, string> | null;
  events?: string[] | null;
  undone?: string | null;
  new_node?: number | null;
}

export interface StrokePayload {
  pixels: number[][]; // [row, col] vertices
  kind: "foreground" | "background";
}

export interface ActionPayload {
  kind:
    | "confirm"
    | "reorder"
    | "type"
    | "approve_all"
    | "undo"
    | "scribble"
    | "seed_floor"
    | "seed_wall";
  node_id?: number;
  label?: string;
  strokes?: StrokePayload[];
  segment_id?: number;
}

export const FLOOR_ID = -1;
