import { describe, expect, it } from "vitest";

import {
  cssColor,
  timeColor,
  TIME_STOPS,
  yellows,
  YELLOWS_STOPS,
} from "../src/colors.js";

describe("yellows ramp", () => {
  it("hits the published endpoints", () => {
    expect(yellows(0)).toEqual(YELLOWS_STOPS[0]);
    expect(yellows(1)).toEqual(YELLOWS_STOPS[YELLOWS_STOPS.length - 1]);
  });

  it("clips out-of-range inputs", () => {
    expect(yellows(-4)).toEqual(yellows(0));
    expect(yellows(7)).toEqual(yellows(1));
  });

  it("darkens monotonically", () => {
    let prev = Infinity;
    for (let i = 0; i <= 16; i++) {
      const [r, g, b] = yellows(i / 16);
      const luma = 0.299 * r + 0.587 * g + 0.114 * b;
      expect(luma).toBeLessThanOrEqual(prev + 1e-9);
      prev = luma;
    }
  });

  it("interpolates between stops", () => {
    // halfway through the first interval of an 8-interval ramp
    const t = 0.5 / 8;
    const [r] = yellows(t);
    expect(r).toBe(
      Math.round((YELLOWS_STOPS[0]![0] + YELLOWS_STOPS[1]![0]) / 2),
    );
  });
});

describe("time ramp", () => {
  it("runs dark to bright so late steps stand out", () => {
    expect(timeColor(0)).toEqual(TIME_STOPS[0]);
    expect(timeColor(1)).toEqual(TIME_STOPS[TIME_STOPS.length - 1]);
    const early = timeColor(0.1);
    const late = timeColor(0.9);
    const luma = (c: number[]) =>
      0.299 * c[0]! + 0.587 * c[1]! + 0.114 * c[2]!;
    expect(luma(late)).toBeGreaterThan(luma(early));
  });
});

describe("cssColor", () => {
  it("formats an rgb() triple", () => {
    expect(cssColor([1, 22, 255])).toBe("rgb(1,22,255)");
  });
});
