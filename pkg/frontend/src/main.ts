// Application wiring: load a frame, open a session, dispatch gestures.
// All decisions come from the service; this file only moves state around.

import { SessionClient } from "./api.js";
import { renderGraphPanel } from "./graphPanel.js";
import { hitNode, OverlayRenderer } from "./overlay.js";
import { ScribbleCapture } from "./scribble.js";
import { applyDelta, fromSessionState, type ViewState } from "./state.js";
import type { ActionDelta, NodeState } from "./types.js";

const baseUrl = (window as any).SCENELABEL_URL ?? "http://127.0.0.1:8008";
const client = new SessionClient(baseUrl);

let view: ViewState | null = null;
let image: HTMLImageElement | null = null;
let scribbleMode = false;

const canvas = document.getElementById("viewport") as HTMLCanvasElement;
const panel = document.getElementById("graph-panel") as HTMLElement;
const popup = document.getElementById("popup") as HTMLElement;
const status = document.getElementById("status") as HTMLElement;
const renderer = new OverlayRenderer(canvas);
const capture = new ScribbleCapture(canvas);
capture.onChange = () => redraw();

function redraw(): void {
  if (!view) return;
  view.pendingStrokes = [...capture.strokes];
  renderer.render(view, image);
  renderGraphPanel(view, panel);
  status.textContent = `phase: ${view.phase}`;
}

function acknowledge(delta: ActionDelta): void {
  if (!view) return;
  view = applyDelta(view, delta);
  capture.clear();
  redraw();
}

function showPopup(node: NodeState, x: number, y: number): void {
  popup.innerHTML = "";
  popup.style.display = "block";
  popup.style.left = `${x}px`;
  popup.style.top = `${y}px`;
  const lock = document.createElement("button");
  lock.textContent = `Lock "${node.suggestions[0]?.label ?? node.label}"`;
  lock.onclick = () => {
    popup.style.display = "none";
    client.confirm(node.id).then(acknowledge).catch(reportError);
  };
  popup.appendChild(lock);
  for (const s of node.suggestions.slice(1)) {
    const alt = document.createElement("button");
    alt.textContent = s.label;
    alt.onclick = () => {
      popup.style.display = "none";
      client.reorder(node.id, s.label).then(acknowledge).catch(reportError);
    };
    popup.appendChild(alt);
  }
  const typed = document.createElement("input");
  typed.placeholder = "type new…";
  typed.onkeydown = (e) => {
    if (e.key === "Enter" && typed.value.trim()) {
      popup.style.display = "none";
      client.typeLabel(node.id, typed.value.trim()).then(acknowledge).catch(reportError);
    }
  };
  popup.appendChild(typed);
}

function reportError(err: unknown): void {
  status.textContent = String(err);
}

canvas.addEventListener("click", (e) => {
  if (!view || scribbleMode) return;
  const rect = canvas.getBoundingClientRect();
  const x = ((e.clientX - rect.left) / rect.width) * canvas.width;
  const y = ((e.clientY - rect.top) / rect.height) * canvas.height;
  const id = hitNode(view, x, y);
  view.selected = id;
  redraw();
  if (id !== null) {
    const node = view.nodes.get(id)!;
    if (!node.confirmed) showPopup(node, e.clientX, e.clientY);
  } else {
    popup.style.display = "none";
  }
});

function bind(id: string, handler: () => void): void {
  const el = document.getElementById(id);
  if (el) el.onclick = handler;
}

bind("approve-all", () => client.approveAll().then(acknowledge).catch(reportError));
bind("undo", () => client.undo().then(acknowledge).catch(reportError));
bind("scribble-toggle", () => {
  scribbleMode = !scribbleMode;
  status.textContent = scribbleMode ? `scribble: ${capture.mode}` : "select mode";
});
bind("scribble-kind", () => {
  capture.mode = capture.mode === "foreground" ? "background" : "foreground";
  status.textContent = `scribble: ${capture.mode}`;
});
bind("scribble-submit", () => {
  const strokes = capture.take();
  if (strokes.length) {
    client.scribble(strokes).then(acknowledge).catch(reportError);
  }
});

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const frameId = params.get("frame");
  if (!frameId) {
    const res = await fetch(`${baseUrl}/frames`);
    const { frames } = await res.json();
    status.textContent = frames.length
      ? `open ?frame=${frames[0]} (available: ${frames.join(", ")})`
      : "no frames in the data directory";
    return;
  }
  const state = await client.createSession(frameId);
  view = fromSessionState(state);
  canvas.width = state.image_size[1];
  canvas.height = state.image_size[0];
  image = new Image();
  image.onload = () => redraw();
  image.src = client.colorUrl(frameId);
  redraw();
}

boot().catch(reportError);
