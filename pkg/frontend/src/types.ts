/** Wire types for the run-directory HTTP API, plus the client's view state. */

export type Axis = 1 | 2 | 3 | 4;

/** Range-space window as served: [min1, max1, min2, max2]. */
export type Window4 = [number, number, number, number];

export interface SummaryDoc {
  states: string[];
  segments: Record<string, Array<string | number>>;
  csp_segments: Record<string, string[]>;
  time_steps: Record<string, number>;
  times_fs: Record<string, number[]>;
  window: Window4;
  res: [number, number];
  counts: Record<string, number>;
  pca: {
    eigenvalues: number[];
    loadings: number[][];
    mean: number[];
    explained_variance_ratio: number[];
  };
  content_hash: string;
}

export interface TrackPointDoc {
  time_index: number;
  time_fs: number;
  x: number;
  y: number;
}

export interface TrackDoc {
  state: string;
  segment: string | number;
  points: TrackPointDoc[];
  metrics: { arc_length: number; bbox_area: number; max_step: number };
}

export interface TracksDoc {
  axes: [number, number];
  tracks: TrackDoc[];
}

export interface CspDoc {
  state: string;
  segment: string;
  time_index: number;
  window: Window4;
  res: [number, number];
  density_b64: string;
  dtype: string;
  order: string;
  total_mass: number;
  out_of_window: number;
}

export interface SeedDoc {
  id: number;
  element: string;
  center: [number, number, number];
  weight: number;
}

export interface MeshDoc {
  vertices: number[][];
  values: number[][];
  triangles: number[][];
  state: string;
  time_index: number;
  seeds: SeedDoc[];
}

export interface FiberRequest {
  state: string;
  t: number;
  polygon: Array<[number, number]>;
}

/** One track joined across both fetched axis pairs: full 4-vector scores. */
export interface TrackData {
  state: string;
  segment: string;
  timeIndices: number[];
  timesFs: number[];
  /** scores[i] is the 4-vector of step i. */
  scores: Array<[number, number, number, number]>;
}

export interface StepRef {
  state: string;
  segment: string;
  timeIndex: number;
}

export interface CspKey {
  state: string;
  segment: string;
  t: number;
}

export interface TrackFilter {
  /** null means every state (resp. segment) passes. */
  states: string[] | null;
  segments: string[] | null;
  /** Tracks whose current-pair bbox area falls below this are hidden. */
  minBboxArea: number;
}

export interface ViewState {
  axes: [Axis, Axis];
  filter: TrackFilter;
  hovered: StepRef | null;
  selected: StepRef | null;
  /** Up to two pinned scatterplots, shown side by side. */
  pinned: CspKey[];
  /** Control polygon under construction, in window coordinates. */
  polygon: Array<[number, number]>;
  meshes: MeshDoc[];
}

export function cspKeyId(k: CspKey): string {
  return `${k.state}/${k.segment}/${k.t}`;
}
