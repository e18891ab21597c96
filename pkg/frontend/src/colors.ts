/** Color ramps shared by the plot panels. */

export type Rgb = [number, number, number];

// ColorBrewer 9-class YlOrBr, light to dark; matches the server's PNG export
export const YELLOWS_STOPS: Rgb[] = [
  [255, 255, 229],
  [255, 247, 188],
  [254, 227, 145],
  [254, 196, 79],
  [254, 153, 41],
  [236, 112, 20],
  [204, 76, 2],
  [153, 52, 4],
  [102, 37, 6],
];

// dark purple through teal to yellow, linear in normalized time, so late
// steps read as the bright end of every track
export const TIME_STOPS: Rgb[] = [
  [68, 1, 84],
  [33, 145, 140],
  [253, 231, 37],
];

function rampAt(stops: Rgb[], t: number): Rgb {
  const x = Math.min(1, Math.max(0, t));
  const pos = x * (stops.length - 1);
  const lo = Math.min(Math.floor(pos), stops.length - 2);
  const hi = stops[lo + 1]!;
  const base = stops[lo]!;
  const f = pos - lo;
  return [
    Math.round(base[0] * (1 - f) + hi[0] * f),
    Math.round(base[1] * (1 - f) + hi[1] * f),
    Math.round(base[2] * (1 - f) + hi[2] * f),
  ];
}

export function yellows(t: number): Rgb {
  return rampAt(YELLOWS_STOPS, t);
}

export function timeColor(t: number): Rgb {
  return rampAt(TIME_STOPS, t);
}

export function cssColor(rgb: Rgb): string {
  return `rgb(${rgb[0]},${rgb[1]},${rgb[2]})`;
}
