/** Typed client for the run-directory API.
 *
 * Every GET response carries an ETag equal to the run's content hash, so
 * revalidation is a single conditional request per URL: a 304 answer is
 * served from the in-memory cache. Nothing is ever polled.
 */

import type {
  CspDoc,
  FiberRequest,
  MeshDoc,
  SummaryDoc,
  TracksDoc,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

interface CacheEntry {
  etag: string;
  body: unknown;
}

async function errorDetail(res: Response): Promise<string> {
  try {
    const doc = (await res.json()) as { detail?: unknown };
    if (typeof doc.detail === "string") return doc.detail;
    return JSON.stringify(doc);
  } catch {
    return res.statusText || "request failed";
  }
}

export class ApiClient {
  private cache = new Map<string, CacheEntry>();

  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) =>
      globalThis.fetch(url, init),
  ) {}

  private async getJson<T>(path: string, signal?: AbortSignal): Promise<T> {
    const url = this.base + path;
    const cached = this.cache.get(url);
    const headers: Record<string, string> = {};
    if (cached) headers["If-None-Match"] = cached.etag;
    const res = await this.fetchFn(url, { headers, signal });
    if (res.status === 304 && cached) return cached.body as T;
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    const body = (await res.json()) as T;
    const etag = res.headers.get("etag");
    if (etag) this.cache.set(url, { etag, body });
    return body;
  }

  summary(signal?: AbortSignal): Promise<SummaryDoc> {
    return this.getJson("/api/v1/summary", signal);
  }

  tracks(a: number, b: number, signal?: AbortSignal): Promise<TracksDoc> {
    return this.getJson(`/api/v1/tracks?axes=${a},${b}`, signal);
  }

  csp(
    state: string,
    segment: string,
    t: number,
    signal?: AbortSignal,
  ): Promise<CspDoc> {
    const s = encodeURIComponent(state);
    const g = encodeURIComponent(segment);
    return this.getJson(`/api/v1/csp/${s}/${g}/${t}`, signal);
  }

  async fiber(req: FiberRequest, signal?: AbortSignal): Promise<MeshDoc> {
    const res = await this.fetchFn(this.base + "/api/v1/fiber", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    if (!res.ok) throw new ApiError(res.status, await errorDetail(res));
    return (await res.json()) as MeshDoc;
  }
}

/** Decode the base64 little-endian float64 bin grid of a CSP response.
 *
 * Returns a row-major (res2 rows) x (res1 columns) array with f1 along
 * the fastest axis, exactly as stored.
 */
export function decodeDensity(doc: {
  density_b64: string;
  res: [number, number];
  dtype: string;
}): Float64Array {
  if (doc.dtype !== "<f8") throw new Error(`unsupported dtype ${doc.dtype}`);
  const raw = atob(doc.density_b64);
  const [r1, r2] = doc.res;
  if (raw.length !== r1 * r2 * 8)
    throw new Error(`density byte count ${raw.length} != ${r1}x${r2}x8`);
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  const view = new DataView(bytes.buffer);
  const out = new Float64Array(r1 * r2);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat64(i * 8, true);
  return out;
}

export function isAbortError(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
