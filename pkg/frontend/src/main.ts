/** Application shell: one fetch pass at startup, everything else local.
 *
 * Summary and both track slices load once; axis switching, filtering, and
 * hover run purely on the cached 4-vector scores. Scatterplots and fiber
 * meshes load on demand, revalidated by ETag, with in-flight requests
 * aborted as soon as the view moves on.
 */

import { ApiClient, decodeDensity, isAbortError } from "./api.js";
import { Banner } from "./banner.js";
import { CspPanel } from "./heatmap.js";
import { MeshPanel } from "./mesh.js";
import { bboxArea, slicePair, zipScores } from "./scores.js";
import type { SlicedTrack } from "./scores.js";
import {
  decodeViewState,
  encodeViewState,
  isAxis,
  trackVisible,
  withAxes,
  withPin,
  withoutPin,
} from "./state.js";
import { TracksPanel } from "./tracks.js";
import type {
  Axis,
  CspKey,
  StepRef,
  SummaryDoc,
  TrackData,
  ViewState,
} from "./types.js";
import { cspKeyId } from "./types.js";

export interface AppOptions {
  root: HTMLElement;
  apiBase?: string;
  fetchFn?: typeof fetch;
  /** Initial query string; defaults to location.search. */
  query?: string;
  /** Receives each query-string update; defaults to history.replaceState. */
  onQueryChange?: (query: string) => void;
}

export class App {
  readonly client: ApiClient;
  readonly banner: Banner;
  readonly tracksPanel: TracksPanel;
  readonly meshPanel: MeshPanel;
  view: ViewState;
  summary: SummaryDoc | null = null;
  tracks: TrackData[] = [];
  private readonly cspRow: HTMLElement;
  private readonly controls: HTMLElement;
  private panels = new Map<string, CspPanel>();
  private viewAbort = new AbortController();
  private inflight = new Set<Promise<unknown>>();
  private readonly onQueryChange: (query: string) => void;

  constructor(private readonly opts: AppOptions) {
    this.client = new ApiClient(
      opts.apiBase ?? "",
      opts.fetchFn ? (url, init) => opts.fetchFn!(url, init) : undefined,
    );
    this.view = decodeViewState(opts.query ?? location.search);
    this.onQueryChange =
      opts.onQueryChange ??
      ((q) => {
        try {
          history.replaceState(null, "", q ? `?${q}` : location.pathname);
        } catch {
          // sandboxed contexts may refuse; the view itself is unaffected
        }
      });

    const root = opts.root;
    root.classList.add("app");
    this.banner = new Banner(root);

    this.controls = document.createElement("div");
    this.controls.className = "controls";
    root.appendChild(this.controls);

    const main = document.createElement("div");
    main.className = "main-row";
    root.appendChild(main);

    const tracksRoot = document.createElement("div");
    main.appendChild(tracksRoot);
    this.tracksPanel = new TracksPanel(tracksRoot, {
      onPin: (ref) => this.pinStep(ref),
      onHover: (ref) => {
        this.view.hovered = ref;
      },
    });

    this.cspRow = document.createElement("div");
    this.cspRow.className = "csp-row";
    main.appendChild(this.cspRow);

    const meshRoot = document.createElement("div");
    main.appendChild(meshRoot);
    this.meshPanel = new MeshPanel(meshRoot);
  }

  /** Resolves when every request issued so far has settled. */
  async settled(): Promise<void> {
    while (this.inflight.size > 0) {
      await Promise.allSettled([...this.inflight]);
    }
  }

  private track<T>(p: Promise<T>): Promise<T> {
    this.inflight.add(p);
    // not finally(): its derived promise would surface as an unhandled
    // rejection even when the caller awaits p itself
    p.then(
      () => this.inflight.delete(p),
      () => this.inflight.delete(p),
    );
    return p;
  }

  async boot(): Promise<void> {
    try {
      const [summary, lo, hi] = await this.track(
        Promise.all([
          this.client.summary(),
          this.client.tracks(1, 2),
          this.client.tracks(3, 4),
        ]),
      );
      this.summary = summary;
      this.tracks = zipScores(lo, hi);
    } catch (err) {
      this.banner.show(`failed to load the dataset: ${describe(err)}`);
      return;
    }
    this.buildControls();
    this.renderTracks();
    for (const key of this.view.pinned) this.openPanel(key);
    this.syncUrl();
  }

  // -- derived view ----------------------------------------------------------

  visibleTracks(): SlicedTrack[] {
    const [a, b] = this.view.axes;
    const sliced = slicePair(this.tracks, a, b);
    return sliced.filter((t) =>
      trackVisible(this.view.filter, t.state, t.segment, bboxArea(t)),
    );
  }

  private renderTracks(): void {
    this.tracksPanel.render(this.visibleTracks(), this.view.axes);
  }

  // -- actions ---------------------------------------------------------------

  setAxes(a: number, b: number): void {
    const next = withAxes(this.view, a, b);
    if (next === this.view) return;
    this.view = next;
    this.cancelPending();
    this.renderTracks();
    this.syncUrl();
  }

  setFilter(update: Partial<ViewState["filter"]>): void {
    this.view = {
      ...this.view,
      filter: { ...this.view.filter, ...update },
    };
    this.renderTracks();
    this.syncUrl();
  }

  pinStep(ref: StepRef): void {
    this.view.selected = ref;
    const key: CspKey = { state: ref.state, segment: ref.segment, t: ref.timeIndex };
    const before = this.view.pinned;
    this.view = withPin(this.view, key);
    if (this.view.pinned !== before) {
      this.reconcilePanels();
      this.syncUrl();
    }
  }

  unpin(key: CspKey): void {
    this.view = withoutPin(this.view, key);
    this.reconcilePanels();
    this.syncUrl();
  }

  private reconcilePanels(): void {
    const want = new Set(this.view.pinned.map(cspKeyId));
    for (const [id, panel] of [...this.panels]) {
      if (!want.has(id)) {
        panel.root.remove();
        this.panels.delete(id);
      }
    }
    for (const key of this.view.pinned) {
      if (!this.panels.has(cspKeyId(key))) this.openPanel(key);
    }
  }

  private openPanel(key: CspKey): void {
    const panel = new CspPanel(key, {
      onUnpin: (k) => this.unpin(k),
      onPolygonArmed: (k) => this.armPolygon(k),
      onSubmitPolygon: (k, polygon) => void this.submitPolygon(k, polygon),
    });
    this.panels.set(cspKeyId(key), panel);
    this.cspRow.appendChild(panel.root);
    const signal = this.viewAbort.signal;
    void this.track(
      this.client
        .csp(key.state, key.segment, key.t, signal)
        .then((doc) => panel.setData(doc, decodeDensity(doc)))
        .catch((err) => {
          if (isAbortError(err)) return;
          panel.setError(describe(err));
          this.banner.show(`scatterplot load failed: ${describe(err)}`);
        }),
    );
  }

  /** Only one polygon exists at a time; arming a panel clears the rest. */
  private armPolygon(key: CspKey): void {
    const id = cspKeyId(key);
    for (const [pid, panel] of this.panels) {
      if (pid !== id) panel.polygonTool.clear();
    }
    this.view.polygon = [];
  }

  async submitPolygon(
    key: CspKey,
    polygon: Array<[number, number]>,
  ): Promise<void> {
    this.view.polygon = polygon;
    const panel = this.panels.get(cspKeyId(key));
    try {
      const mesh = await this.track(
        this.client.fiber(
          { state: key.state, t: key.t, polygon },
          this.viewAbort.signal,
        ),
      );
      this.view.meshes = [...this.view.meshes, mesh];
      this.meshPanel.setMesh(mesh);
    } catch (err) {
      if (isAbortError(err)) return;
      const detail = describe(err);
      if (panel && isValidationError(err)) {
        panel.polygonTool.showValidation(detail);
      } else {
        this.banner.show(`fiber extraction failed: ${detail}`);
      }
    }
  }

  private cancelPending(): void {
    this.viewAbort.abort();
    this.viewAbort = new AbortController();
  }

  private syncUrl(): void {
    this.onQueryChange(encodeViewState(this.view));
  }

  // -- controls --------------------------------------------------------------

  private buildControls(): void {
    const summary = this.summary;
    if (!summary) return;
    this.controls.textContent = "";

    const axisBox = document.createElement("label");
    axisBox.textContent = "axes ";
    const selects: HTMLSelectElement[] = [];
    for (const which of [0, 1] as const) {
      const sel = document.createElement("select");
      sel.className = which === 0 ? "axis-a" : "axis-b";
      for (const n of [1, 2, 3, 4]) {
        const opt = document.createElement("option");
        opt.value = String(n);
        opt.textContent = `PC${n}`;
        if (n === this.view.axes[which]) opt.selected = true;
        sel.appendChild(opt);
      }
      sel.addEventListener("change", () => {
        const a = Number(selects[0]!.value);
        const b = Number(selects[1]!.value);
        if (isAxis(a) && isAxis(b) && a !== b) this.setAxes(a, b);
        else {
          // revert the widgets to the last valid pair
          selects[0]!.value = String(this.view.axes[0]);
          selects[1]!.value = String(this.view.axes[1]);
        }
      });
      selects.push(sel);
      axisBox.appendChild(sel);
    }
    this.controls.appendChild(axisBox);

    const stateBox = document.createElement("span");
    stateBox.className = "state-filter";
    stateBox.append("states: ");
    for (const state of summary.states) {
      const label = document.createElement("label");
      const cb = document.createElement("input");
      cb.type = "checkbox";
      cb.value = state;
      cb.checked =
        this.view.filter.states === null ||
        this.view.filter.states.includes(state);
      cb.addEventListener("change", () => {
        const checked = [...stateBox.querySelectorAll("input:checked")].map(
          (el) => (el as HTMLInputElement).value,
        );
        this.setFilter({
          states: checked.length === summary.states.length ? null : checked,
        });
      });
      label.append(cb, state);
      stateBox.appendChild(label);
    }
    this.controls.appendChild(stateBox);

    const areaBox = document.createElement("label");
    areaBox.className = "area-filter";
    areaBox.append("min bbox area ");
    const area = document.createElement("input");
    area.type = "number";
    area.min = "0";
    area.step = "any";
    area.value = String(this.view.filter.minBboxArea);
    area.addEventListener("change", () => {
      const v = Number(area.value);
      this.setFilter({ minBboxArea: Number.isFinite(v) && v > 0 ? v : 0 });
    });
    areaBox.appendChild(area);
    this.controls.appendChild(areaBox);
  }
}

function describe(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}

function isValidationError(err: unknown): boolean {
  return (
    typeof err === "object" &&
    err !== null &&
    "status" in err &&
    (err as { status: number }).status === 400
  );
}

/** Browser entry point; tests construct App directly instead. */
export function start(): void {
  const root = document.getElementById("app");
  if (!root) return;
  const apiBase = new URLSearchParams(location.search).get("api") ?? "";
  const app = new App({ root, apiBase });
  void app.boot();
}
