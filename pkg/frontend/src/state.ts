/** View state plus its URL round-trip.
 *
 * Everything needed to rebuild a session lives in the query string: axis
 * pair, track filter, and pinned scatterplot keys. Hover, the in-progress
 * polygon, and fetched meshes are deliberately transient.
 */

import type { Axis, CspKey, TrackFilter, ViewState } from "./types.js";
import { cspKeyId } from "./types.js";

export const MAX_PINNED = 2;

export function defaultViewState(): ViewState {
  return {
    axes: [1, 2],
    filter: { states: null, segments: null, minBboxArea: 0 },
    hovered: null,
    selected: null,
    pinned: [],
    polygon: [],
    meshes: [],
  };
}

export function isAxis(n: number): n is Axis {
  return Number.isInteger(n) && n >= 1 && n <= 4;
}

/** Replace the axis pair; invalid or equal axes leave the state unchanged. */
export function withAxes(view: ViewState, a: number, b: number): ViewState {
  if (!isAxis(a) || !isAxis(b) || a === b) return view;
  return { ...view, axes: [a, b] };
}

/** Pin a scatterplot; a third pin replaces the older of the two. */
export function withPin(view: ViewState, key: CspKey): ViewState {
  const id = cspKeyId(key);
  if (view.pinned.some((k) => cspKeyId(k) === id)) return view;
  const pinned = [...view.pinned, key].slice(-MAX_PINNED);
  return { ...view, pinned };
}

export function withoutPin(view: ViewState, key: CspKey): ViewState {
  const id = cspKeyId(key);
  return { ...view, pinned: view.pinned.filter((k) => cspKeyId(k) !== id) };
}

export function polygonSubmittable(polygon: Array<[number, number]>): boolean {
  return polygon.length >= 3;
}

export function trackVisible(
  filter: TrackFilter,
  state: string,
  segment: string,
  bboxArea: number,
): boolean {
  if (filter.states !== null && !filter.states.includes(state)) return false;
  if (filter.segments !== null && !filter.segments.includes(segment))
    return false;
  return bboxArea >= filter.minBboxArea;
}

// -- URL codec ---------------------------------------------------------------

function encodeKey(k: CspKey): string {
  // encodeURIComponent leaves "~" alone, so escape the separator by hand
  return [k.state, k.segment, String(k.t)]
    .map((p) => encodeURIComponent(p).replace(/~/g, "%7E"))
    .join("~");
}

function decodeKey(s: string): CspKey | null {
  const parts = s.split("~").map(decodeURIComponent);
  if (parts.length !== 3) return null;
  const t = Number(parts[2]);
  if (!Number.isInteger(t) || t < 0) return null;
  return { state: parts[0]!, segment: parts[1]!, t };
}

export function encodeViewState(view: ViewState): string {
  const q = new URLSearchParams();
  q.set("ax", `${view.axes[0]},${view.axes[1]}`);
  if (view.filter.states !== null) q.set("st", view.filter.states.join(","));
  if (view.filter.segments !== null)
    q.set("sg", view.filter.segments.join(","));
  if (view.filter.minBboxArea > 0)
    q.set("bb", String(view.filter.minBboxArea));
  if (view.pinned.length > 0)
    q.set("pin", view.pinned.map(encodeKey).join(","));
  return q.toString();
}

export function decodeViewState(query: string): ViewState {
  const view = defaultViewState();
  const q = new URLSearchParams(query);

  const ax = q.get("ax");
  if (ax) {
    const nums = ax.split(",").map(Number);
    if (nums.length === 2) {
      const next = withAxes(view, nums[0]!, nums[1]!);
      view.axes = next.axes;
    }
  }

  const st = q.get("st");
  if (st !== null)
    view.filter.states = st === "" ? [] : st.split(",");
  const sg = q.get("sg");
  if (sg !== null)
    view.filter.segments = sg === "" ? [] : sg.split(",");
  const bb = q.get("bb");
  if (bb !== null) {
    const v = Number(bb);
    if (Number.isFinite(v) && v > 0) view.filter.minBboxArea = v;
  }

  const pin = q.get("pin");
  if (pin) {
    for (const part of pin.split(",")) {
      const key = decodeKey(part);
      if (key && view.pinned.length < MAX_PINNED) view.pinned.push(key);
    }
  }
  return view;
}
