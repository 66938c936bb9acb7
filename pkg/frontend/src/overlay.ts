// Canvas overlay: frame image, projected cuboid polygons, rank-1 label tags.
// Confirmed objects draw solid; unconfirmed draw dashed with a dimmer fill.

import { topLabel, type ViewState } from "./state.js";
import type { NodeState } from "./types.js";

export interface OverlayStyle {
  confirmedStroke: string;
  pendingStroke: string;
  selectedStroke: string;
  strokeWidth: number;
  font: string;
}

export const DEFAULT_STYLE: OverlayStyle = {
  confirmedStroke: "#3fd07a",
  pendingStroke: "#ffd23f",
  selectedStroke: "#4fc3f7",
  strokeWidth: 2,
  font: "12px sans-serif",
};

export class OverlayRenderer {
  private canvas: HTMLCanvasElement;
  private style: OverlayStyle;
  lastDrawn: number[] = []; // node ids drawn in the last pass, render bookkeeping

  constructor(canvas: HTMLCanvasElement, style: OverlayStyle = DEFAULT_STYLE) {
    this.canvas = canvas;
    this.style = style;
  }

  render(view: ViewState, image: CanvasImageSource | null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (image) ctx.drawImage(image, 0, 0);
    this.lastDrawn = [];
    const ids = [...view.nodes.keys()].sort((a, b) => a - b);
    for (const id of ids) {
      const node = view.nodes.get(id)!;
      this.drawNode(ctx, node, id === view.selected);
      this.lastDrawn.push(id);
    }
    this.drawStrokes(ctx, view);
  }

  private drawNode(ctx: CanvasRenderingContext2D, node: NodeState, selected: boolean): void {
    if (node.polygon.length < 3) return;
    ctx.save();
    ctx.lineWidth = this.style.strokeWidth;
    ctx.strokeStyle = selected
      ? this.style.selectedStroke
      : node.confirmed
        ? this.style.confirmedStroke
        : this.style.pendingStroke;
    ctx.setLineDash(node.confirmed ? [] : [6, 4]);
    ctx.beginPath();
    ctx.moveTo(node.polygon[0][0], node.polygon[0][1]);
    for (const [x, y] of node.polygon.slice(1)) ctx.lineTo(x, y);
    ctx.closePath();
    ctx.stroke();
    const [tx, ty] = node.polygon.reduce(
      ([sx, sy], [x, y]) => [sx + x / node.polygon.length, sy + y / node.polygon.length],
      [0, 0],
    );
    ctx.font = this.style.font;
    ctx.fillStyle = ctx.strokeStyle;
    ctx.setLineDash([]);
    ctx.fillText(topLabel(node), tx, ty);
    ctx.restore();
  }

  private drawStrokes(ctx: CanvasRenderingContext2D, view: ViewState): void {
    for (const stroke of view.pendingStrokes) {
      if (!stroke.pixels.length) continue;
      ctx.save();
      ctx.lineWidth = 3;
      ctx.strokeStyle = stroke.kind === "foreground" ? "#ff5252" : "#2979ff";
      ctx.beginPath();
      // stroke pixels are [row, col]; canvas wants (x=col, y=row)
      ctx.moveTo(stroke.pixels[0][1], stroke.pixels[0][0]);
      for (const [r, c] of stroke.pixels.slice(1)) ctx.lineTo(c, r);
      ctx.stroke();
      ctx.restore();
    }
  }
}

// Point-in-polygon hit test used to pick an object from a click.
export function hitNode(view: ViewState, x: number, y: number): number | null {
  const ids = [...view.nodes.keys()].sort((a, b) => a - b);
  let best: { id: number; area: number } | null = null;
  for (const id of ids) {
    const poly = view.nodes.get(id)!.polygon;
    if (poly.length >= 3 && pointInPolygon(x, y, poly)) {
      const area = polygonArea(poly);
      if (!best || area < best.area) best = { id, area }; // prefer smallest
    }
  }
  return best ? best.id : null;
}

export function pointInPolygon(x: number, y: number, poly: number[][]): boolean {
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const [xi, yi] = poly[i];
    const [xj, yj] = poly[j];
    if (yi > y !== yj > y && x < ((xj - xi) * (y - yi)) / (yj - yi) + xi) {
      inside = !inside;
    }
  }
  return inside;
}

export function polygonArea(poly: number[][]): number {
  let area = 0;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    area += (poly[j][0] + poly[i][0]) * (poly[j][1] - poly[i][1]);
  }
  return Math.abs(area / 2);
}
