/** Pinned scatterplot panel.
 *
 * Bins arrive as integrated spatial volume; the panel tone-maps
 * log(1 + volume / bin_area) relative to the densest bin, through the
 * same yellow sequential ramp as the server's PNG export, so a saved
 * image and the live panel agree. The mass badge repeats the server's
 * total_mass untouched.
 */

import { cssColor, yellows } from "./colors.js";
import { PolygonTool } from "./polygon.js";
import type { CspDoc, CspKey } from "./types.js";
import { cspKeyId } from "./types.js";

const SIZE = 360;

export interface CspPanelHandlers {
  onUnpin: (key: CspKey) => void;
  onSubmitPolygon: (key: CspKey, polygon: Array<[number, number]>) => void;
  onPolygonArmed: (key: CspKey) => void;
}

function colorLut(): string[] {
  const lut: string[] = [];
  for (let i = 0; i < 256; i++) lut.push(cssColor(yellows(i / 255)));
  return lut;
}

const LUT = colorLut();

/** Axis names: hole/particle for natural-transition-orbital states. */
export function axisNames(state: string): [string, string] {
  if (state.toLowerCase().includes("nto")) return ["hole", "particle"];
  return ["f1", "f2"];
}

export class CspPanel {
  readonly root: HTMLElement;
  readonly canvas: HTMLCanvasElement;
  readonly polygonTool: PolygonTool;
  private readonly badge: HTMLElement;
  private readonly title: HTMLElement;
  private readonly status: HTMLElement;
  private doc: CspDoc | null = null;

  constructor(
    readonly key: CspKey,
    private readonly handlers: CspPanelHandlers,
  ) {
    this.root = document.createElement("div");
    this.root.className = "csp-panel";
    this.root.dataset.key = cspKeyId(key);

    const head = document.createElement("div");
    head.className = "csp-head";
    this.title = document.createElement("span");
    this.title.className = "csp-title";
    this.title.textContent = `${key.state} / ${key.segment} · t=${key.t}`;
    const unpin = document.createElement("button");
    unpin.className = "unpin";
    unpin.type = "button";
    unpin.textContent = "unpin";
    unpin.addEventListener("click", () => this.handlers.onUnpin(this.key));
    head.append(this.title, unpin);

    const stack = document.createElement("div");
    stack.className = "csp-stack";
    this.canvas = document.createElement("canvas");
    this.canvas.width = SIZE;
    this.canvas.height = SIZE;
    this.canvas.className = "csp-canvas";
    const overlay = document.createElement("canvas");
    overlay.width = SIZE;
    overlay.height = SIZE;
    overlay.className = "csp-overlay";
    stack.append(this.canvas, overlay);

    const foot = document.createElement("div");
    foot.className = "csp-foot";
    this.badge = document.createElement("span");
    this.badge.className = "mass-badge";
    this.badge.textContent = "mass …";
    this.status = document.createElement("span");
    this.status.className = "csp-status";
    this.status.textContent = "loading…";
    foot.append(this.badge, this.status);

    this.root.append(head, stack, foot);

    this.polygonTool = new PolygonTool(overlay, {
      toWindow: (px, py) => this.canvasToWindow(px, py),
      onArmed: () => this.handlers.onPolygonArmed(this.key),
      onSubmit: (polygon) => this.handlers.onSubmitPolygon(this.key, polygon),
    });
    this.root.appendChild(this.polygonTool.bar);
  }

  setError(message: string): void {
    this.status.textContent = message;
  }

  setData(doc: CspDoc, density: Float64Array): void {
    this.doc = doc;
    this.badge.dataset.mass = String(doc.total_mass);
    this.badge.textContent = `mass ${formatMass(doc.total_mass)}`;
    const [n1, n2] = axisNames(doc.state);
    this.status.textContent = `${n1} → horizontal, ${n2} → vertical`;
    this.draw(doc, density);
  }

  private draw(doc: CspDoc, density: Float64Array): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const [r1, r2] = doc.res;
    const win = doc.window;
    const binArea = ((win[1] - win[0]) * (win[3] - win[2])) / (r1 * r2);

    ctx.clearRect(0, 0, SIZE, SIZE);
    ctx.fillStyle = LUT[0]!;
    ctx.fillRect(0, 0, SIZE, SIZE);

    let vmax = 0;
    for (let k = 0; k < density.length; k++) {
      const v = Math.log1p(density[k]! / binArea);
      if (v > vmax) vmax = v;
    }
    if (vmax <= 0) return; // empty scatterplot stays a blank panel

    const bw = SIZE / r1;
    const bh = SIZE / r2;
    for (let j = 0; j < r2; j++) {
      for (let i = 0; i < r1; i++) {
        const d = density[j * r1 + i]!;
        if (d === 0) continue;
        const t = Math.log1p(d / binArea) / vmax;
        ctx.fillStyle = LUT[Math.round(t * 255)]!;
        // row j counts up in f2; the canvas y axis points down
        ctx.fillRect(i * bw, SIZE - (j + 1) * bh, Math.ceil(bw), Math.ceil(bh));
      }
    }
  }

  /** Map canvas pixels to range-space coordinates of the loaded window. */
  canvasToWindow(px: number, py: number): [number, number] {
    const win = this.doc?.window ?? [0, 1, 0, 1];
    const u = win[0] + (px / SIZE) * (win[1] - win[0]);
    const v = win[2] + ((SIZE - py) / SIZE) * (win[3] - win[2]);
    return [u, v];
  }
}

export function formatMass(mass: number): string {
  if (mass === 0) return "0";
  const a = Math.abs(mass);
  if (a >= 1e-3 && a < 1e4) return mass.toPrecision(6);
  return mass.toExponential(5);
}
