import { describe, expect, it } from "vitest";

import {
  decodeViewState,
  defaultViewState,
  encodeViewState,
  polygonSubmittable,
  trackVisible,
  withAxes,
  withoutPin,
  withPin,
} from "../src/state.js";

describe("axis pair", () => {
  it("accepts distinct axes in 1..4", () => {
    const v = withAxes(defaultViewState(), 2, 4);
    expect(v.axes).toEqual([2, 4]);
  });

  it("ignores equal, fractional, or out-of-range axes", () => {
    const base = defaultViewState();
    expect(withAxes(base, 2, 2)).toBe(base);
    expect(withAxes(base, 0, 3)).toBe(base);
    expect(withAxes(base, 1, 5)).toBe(base);
    expect(withAxes(base, 1.5, 2)).toBe(base);
  });
});

describe("pinning", () => {
  const k1 = { state: "rot", segment: "all", t: 3 };
  const k2 = { state: "sca", segment: "all", t: 9 };
  const k3 = { state: "rot", segment: "0", t: 12 };

  it("holds at most two pins, evicting the oldest", () => {
    let v = withPin(defaultViewState(), k1);
    v = withPin(v, k2);
    v = withPin(v, k3);
    expect(v.pinned).toEqual([k2, k3]);
  });

  it("ignores duplicate pins", () => {
    let v = withPin(defaultViewState(), k1);
    v = withPin(v, { ...k1 });
    expect(v.pinned).toEqual([k1]);
  });

  it("unpins by key identity", () => {
    let v = withPin(defaultViewState(), k1);
    v = withPin(v, k2);
    v = withoutPin(v, { ...k1 });
    expect(v.pinned).toEqual([k2]);
  });
});

describe("polygon gating", () => {
  it("requires three vertices", () => {
    expect(polygonSubmittable([])).toBe(false);
    expect(
      polygonSubmittable([
        [0, 0],
        [1, 1],
      ]),
    ).toBe(false);
    expect(
      polygonSubmittable([
        [0, 0],
        [1, 0],
        [1, 1],
      ]),
    ).toBe(true);
  });
});

describe("track filter", () => {
  it("filters by state, segment, and bbox area", () => {
    const all = { states: null, segments: null, minBboxArea: 0 };
    expect(trackVisible(all, "rot", "all", 0)).toBe(true);
    expect(trackVisible({ ...all, states: ["sca"] }, "rot", "all", 1)).toBe(false);
    expect(trackVisible({ ...all, segments: ["0"] }, "rot", "all", 1)).toBe(false);
    expect(trackVisible({ ...all, minBboxArea: 0.5 }, "rot", "all", 0.4)).toBe(false);
    expect(trackVisible({ ...all, minBboxArea: 0.5 }, "rot", "all", 0.6)).toBe(true);
  });

  it("treats an empty list as matching nothing", () => {
    const none = { states: [], segments: null, minBboxArea: 0 };
    expect(trackVisible(none, "rot", "all", 1)).toBe(false);
  });
});

describe("URL round-trip", () => {
  it("preserves axes, filters, and pins", () => {
    let v = defaultViewState();
    v = withAxes(v, 3, 1);
    v.filter = { states: ["rot"], segments: ["all", "0"], minBboxArea: 0.25 };
    v = withPin(v, { state: "rot", segment: "all", t: 24 });
    v = withPin(v, { state: "sca", segment: "all", t: 7 });

    const restored = decodeViewState(encodeViewState(v));
    expect(restored.axes).toEqual([3, 1]);
    expect(restored.filter).toEqual(v.filter);
    expect(restored.pinned).toEqual(v.pinned);
  });

  it("survives awkward state labels", () => {
    let v = defaultViewState();
    v = withPin(v, { state: "m,v/k~x", segment: "all", t: 2 });
    const restored = decodeViewState(encodeViewState(v));
    expect(restored.pinned).toEqual(v.pinned);
  });

  it("falls back to defaults on malformed input", () => {
    const v = decodeViewState("ax=9,9&bb=-3&pin=notakey");
    expect(v.axes).toEqual([1, 2]);
    expect(v.filter.minBboxArea).toBe(0);
    expect(v.pinned).toEqual([]);
  });

  it("keeps hover, polygon, and meshes out of the URL", () => {
    const v = defaultViewState();
    v.hovered = { state: "rot", segment: "all", timeIndex: 1 };
    v.polygon = [
      [0, 0],
      [1, 0],
      [1, 1],
    ];
    expect(encodeViewState(v)).toBe("ax=1%2C2");
  });
});
