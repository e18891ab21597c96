import { describe, expect, it } from "vitest";

import { bboxArea, slicePair, zipScores } from "../src/scores.js";
import { makeFakeApi } from "./fake-api.js";

describe("zipScores", () => {
  it("recombines the (1,2) and (3,4) slices into 4-vectors", () => {
    const fake = makeFakeApi();
    const lo = fake.tracksDoc(1, 2);
    const hi = fake.tracksDoc(3, 4);
    const joined = zipScores(lo, hi);
    expect(joined.map((t) => [t.state, t.segment])).toEqual([
      ["rot", "all"],
      ["sca", "all"],
    ]);
    const rot = joined[0]!;
    expect(rot.scores[5]).toEqual([
      lo.tracks[0]!.points[5]!.x,
      lo.tracks[0]!.points[5]!.y,
      hi.tracks[0]!.points[5]!.x,
      hi.tracks[0]!.points[5]!.y,
    ]);
  });

  it("rejects responses for the wrong pairs", () => {
    const fake = makeFakeApi();
    expect(() => zipScores(fake.tracksDoc(1, 3), fake.tracksDoc(3, 4))).toThrow(
      /expects/,
    );
  });
});

describe("slicePair", () => {
  it("matches what the server would serve for any pair", () => {
    const fake = makeFakeApi();
    const joined = zipScores(fake.tracksDoc(1, 2), fake.tracksDoc(3, 4));
    const server = fake.tracksDoc(2, 3);
    const local = slicePair(joined, 2, 3);
    for (let k = 0; k < server.tracks.length; k++) {
      const sv = server.tracks[k]!;
      const lc = local[k]!;
      expect(lc.xs).toEqual(sv.points.map((p) => p.x));
      expect(lc.ys).toEqual(sv.points.map((p) => p.y));
    }
  });
});

describe("bboxArea", () => {
  it("equals the server's bbox metric for a served pair", () => {
    const fake = makeFakeApi();
    const joined = zipScores(fake.tracksDoc(1, 2), fake.tracksDoc(3, 4));
    const sliced = slicePair(joined, 1, 2);
    const server = fake.tracksDoc(1, 2);
    for (let k = 0; k < sliced.length; k++) {
      expect(bboxArea(sliced[k]!)).toBeCloseTo(
        server.tracks[k]!.metrics.bbox_area,
        12,
      );
    }
  });

  it("is zero for empty or single-point tracks", () => {
    expect(
      bboxArea({
        state: "s",
        segment: "all",
        timeIndices: [],
        timesFs: [],
        xs: [],
        ys: [],
      }),
    ).toBe(0);
    expect(
      bboxArea({
        state: "s",
        segment: "all",
        timeIndices: [0],
        timesFs: [0],
        xs: [3],
        ys: [4],
      }),
    ).toBe(0);
  });
});
