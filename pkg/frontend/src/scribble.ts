// Pointer capture for scribble strokes. Pixels are collected as [row, col]
// in image coordinates; the canvas may be scaled, so the capture maps from
// client space through the canvas transform.

import type { StrokePayload } from "./types.js";

export type ScribbleMode = "foreground" | "background";

export class ScribbleCapture {
  private canvas: HTMLCanvasElement;
  private current: number[][] | null = null;
  mode: ScribbleMode = "foreground";
  strokes: StrokePayload[] = [];
  onChange: (() => void) | null = null;

  constructor(canvas: HTMLCanvasElement) {
    this.canvas = canvas;
    canvas.addEventListener("pointerdown", (e) => this.begin(e));
    canvas.addEventListener("pointermove", (e) => this.extend(e));
    canvas.addEventListener("pointerup", () => this.finish());
    canvas.addEventListener("pointerleave", () => this.finish());
  }

  private toImagePixel(e: PointerEvent): number[] {
    const rect = this.canvas.getBoundingClientRect();
    const col = Math.round(((e.clientX - rect.left) / rect.width) * this.canvas.width);
    const row = Math.round(((e.clientY - rect.top) / rect.height) * this.canvas.height);
    return [
      Math.min(Math.max(row, 0), this.canvas.height - 1),
      Math.min(Math.max(col, 0), this.canvas.width - 1),
    ];
  }

  begin(e: PointerEvent): void {
    this.current = [this.toImagePixel(e)];
  }

  extend(e: PointerEvent): void {
    if (!this.current) return;
    const px = this.toImagePixel(e);
    const last = this.current[this.current.length - 1];
    if (px[0] !== last[0] || px[1] !== last[1]) {
      this.current.push(px);
      this.onChange?.();
    }
  }

  finish(): void {
    if (this.current && this.current.length > 0) {
      this.strokes.push({ pixels: this.current, kind: this.mode });
      this.onChange?.();
    }
    this.current = null;
  }

  clear(): void {
    this.strokes = [];
    this.current = null;
    this.onChange?.();
  }

  take(): StrokePayload[] {
    const out = this.strokes;
    this.strokes = [];
    return out;
  }
}
