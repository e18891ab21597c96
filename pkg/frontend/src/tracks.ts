/** Principal-component track plot.
 *
 * Each visible track is a polyline through its step scores in the current
 * axis pair, stroked segment by segment with a linear time ramp so early
 * steps are dark and late steps bright. Hovering names the nearest step;
 * clicking it pins the step for scatterplot viewing.
 */

import { cssColor, timeColor } from "./colors.js";
import type { SlicedTrack } from "./scores.js";
import type { Axis, StepRef } from "./types.js";

const WIDTH = 640;
const HEIGHT = 440;
const MARGIN = 28;
const HIT_RADIUS = 9;

interface LayoutPoint {
  ref: StepRef;
  timeFs: number;
  px: number;
  py: number;
}

export interface TracksPanelHandlers {
  onPin: (ref: StepRef) => void;
  onHover?: (ref: StepRef | null) => void;
}

export class TracksPanel {
  readonly canvas: HTMLCanvasElement;
  private readonly hint: HTMLElement;
  private readonly hoverLabel: HTMLElement;
  private readonly legend: HTMLElement;
  private readonly axisLabel: HTMLElement;
  private layout: LayoutPoint[] = [];
  private tracks: SlicedTrack[] = [];
  private axes: [Axis, Axis] = [1, 2];

  constructor(
    root: HTMLElement,
    private readonly handlers: TracksPanelHandlers,
  ) {
    root.classList.add("tracks-panel");

    this.canvas = document.createElement("canvas");
    this.canvas.width = WIDTH;
    this.canvas.height = HEIGHT;
    this.canvas.className = "tracks-canvas";

    this.hint = document.createElement("div");
    this.hint.className = "tracks-hint";
    this.hint.hidden = true;
    this.hint.textContent =
      "No tracks match the current filter. Loosen the state, segment, or area settings.";

    this.hoverLabel = document.createElement("div");
    this.hoverLabel.className = "hover-label";
    this.hoverLabel.textContent = " ";

    this.axisLabel = document.createElement("div");
    this.axisLabel.className = "axis-label";

    this.legend = document.createElement("ul");
    this.legend.className = "track-legend";

    root.append(this.canvas, this.hint, this.axisLabel, this.hoverLabel, this.legend);

    this.canvas.addEventListener("mousemove", (e) => this.handleMove(e));
    this.canvas.addEventListener("mouseleave", () => this.setHover(null));
    this.canvas.addEventListener("click", (e) => this.handleClick(e));
  }

  render(tracks: SlicedTrack[], axes: [Axis, Axis]): void {
    this.tracks = tracks;
    this.axes = axes;
    this.axisLabel.textContent = `PC${axes[0]} vs PC${axes[1]}`;
    this.layout = [];
    this.renderLegend();

    const ctx = this.canvas.getContext("2d");
    if (ctx) {
      ctx.clearRect(0, 0, WIDTH, HEIGHT);
      ctx.fillStyle = "#ffffff";
      ctx.fillRect(0, 0, WIDTH, HEIGHT);
    }

    this.hint.hidden = tracks.length > 0;
    if (tracks.length === 0) return;

    const project = this.projection(tracks);
    for (const track of tracks) {
      const n = track.xs.length;
      const pts = track.xs.map((x, i) => project(x, track.ys[i]!));
      for (let i = 0; i < n; i++) {
        this.layout.push({
          ref: {
            state: track.state,
            segment: track.segment,
            timeIndex: track.timeIndices[i]!,
          },
          timeFs: track.timesFs[i]!,
          px: pts[i]![0],
          py: pts[i]![1],
        });
      }
      if (!ctx) continue;
      ctx.lineWidth = 2;
      ctx.lineJoin = "round";
      for (let i = 0; i + 1 < n; i++) {
        const tMid = n > 1 ? (i + 0.5) / (n - 1) : 0;
        ctx.strokeStyle = cssColor(timeColor(tMid));
        ctx.beginPath();
        ctx.moveTo(pts[i]![0], pts[i]![1]);
        ctx.lineTo(pts[i + 1]![0], pts[i + 1]![1]);
        ctx.stroke();
      }
      for (let i = 0; i < n; i++) {
        ctx.fillStyle = cssColor(timeColor(n > 1 ? i / (n - 1) : 0));
        ctx.beginPath();
        ctx.arc(pts[i]![0], pts[i]![1], 2.5, 0, Math.PI * 2);
        ctx.fill();
      }
    }
  }

  /** Canvas position of a step, for tests and external highlighting. */
  pointFor(ref: StepRef): [number, number] | null {
    for (const p of this.layout) {
      if (
        p.ref.state === ref.state &&
        p.ref.segment === ref.segment &&
        p.ref.timeIndex === ref.timeIndex
      )
        return [p.px, p.py];
    }
    return null;
  }

  private projection(
    tracks: SlicedTrack[],
  ): (x: number, y: number) => [number, number] {
    let xMin = Infinity;
    let xMax = -Infinity;
    let yMin = Infinity;
    let yMax = -Infinity;
    for (const t of tracks) {
      for (let i = 0; i < t.xs.length; i++) {
        const x = t.xs[i]!;
        const y = t.ys[i]!;
        if (x < xMin) xMin = x;
        if (x > xMax) xMax = x;
        if (y < yMin) yMin = y;
        if (y > yMax) yMax = y;
      }
    }
    // degenerate spans still deserve a finite projection
    const xSpan = xMax - xMin || 1;
    const ySpan = yMax - yMin || 1;
    const w = WIDTH - 2 * MARGIN;
    const h = HEIGHT - 2 * MARGIN;
    return (x, y) => [
      MARGIN + ((x - xMin) / xSpan) * w,
      HEIGHT - MARGIN - ((y - yMin) / ySpan) * h,
    ];
  }

  private renderLegend(): void {
    this.legend.textContent = "";
    for (const t of this.tracks) {
      const li = document.createElement("li");
      li.textContent = `${t.state} / ${t.segment}`;
      li.dataset.state = t.state;
      li.dataset.segment = t.segment;
      this.legend.appendChild(li);
    }
  }

  private canvasPos(e: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    return [e.clientX - rect.left, e.clientY - rect.top];
  }

  private nearest(px: number, py: number): LayoutPoint | null {
    let best: LayoutPoint | null = null;
    let bestD = HIT_RADIUS * HIT_RADIUS;
    for (const p of this.layout) {
      const d = (p.px - px) ** 2 + (p.py - py) ** 2;
      if (d <= bestD) {
        bestD = d;
        best = p;
      }
    }
    return best;
  }

  private handleMove(e: MouseEvent): void {
    const [px, py] = this.canvasPos(e);
    this.setHover(this.nearest(px, py));
  }

  private setHover(p: LayoutPoint | null): void {
    if (p) {
      this.hoverLabel.textContent = `${p.ref.state} / ${p.ref.segment} · t=${p.ref.timeIndex} · ${p.timeFs} fs`;
    } else {
      this.hoverLabel.textContent = " ";
    }
    this.handlers.onHover?.(p ? p.ref : null);
  }

  private handleClick(e: MouseEvent): void {
    const [px, py] = this.canvasPos(e);
    const p = this.nearest(px, py);
    if (p) this.handlers.onPin(p.ref);
  }
}
