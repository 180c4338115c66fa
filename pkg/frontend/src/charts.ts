// Strip-chart geometry: pure functions from series to SVG path data.

import type { SeriesPoint } from "./state.js";

export interface ChartBox {
  width: number;
  height: number;
  pad: number;
}

export function valueRange(points: SeriesPoint[]): [number, number] {
  if (points.length === 0) return [0, 1];
  let lo = points[0].mean;
  let hi = points[0].mean;
  for (const p of points) {
    lo = Math.min(lo, p.mean);
    hi = Math.max(hi, p.mean);
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

/** Polyline path ("M x y L x y ...") for a series, newest data to the right. */
export function seriesPath(points: SeriesPoint[], box: ChartBox): string {
  if (points.length === 0) return "";
  const [lo, hi] = valueRange(points);
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const spanT = Math.max(t1 - t0, 1e-9);
  const innerW = box.width - 2 * box.pad;
  const innerH = box.height - 2 * box.pad;
  const parts = points.map((p, i) => {
    const x = box.pad + ((p.t - t0) / spanT) * innerW;
    const y = box.pad + (1 - (p.mean - lo) / (hi - lo)) * innerH;
    return `${i === 0 ? "M" : "L"}${x.toFixed(2)} ${y.toFixed(2)}`;
  });
  return parts.join(" ");
}

export function axisLabels(points: SeriesPoint[]): { min: string; max: string; last: string } {
  if (points.length === 0) return { min: "", max: "", last: "" };
  const [lo, hi] = valueRange(points);
  const last = points[points.length - 1].mean;
  return { min: lo.toFixed(2), max: hi.toFixed(2), last: last.toFixed(2) };
}
