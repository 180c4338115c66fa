import { describe, expect, it } from "vitest";

import { axisLabels, seriesPath, valueRange } from "../src/charts.js";

const BOX = { width: 100, height: 50, pad: 0 };

describe("seriesPath", () => {
  it("is empty for no points", () => {
    expect(seriesPath([], BOX)).toBe("");
  });

  it("maps time to x and value to y (inverted axis)", () => {
    const points = [
      { t: 0, mean: 0 },
      { t: 10, mean: 10 },
    ];
    // first point at bottom-left, last at top-right
    expect(seriesPath(points, BOX)).toBe("M0.00 50.00 L100.00 0.00");
  });

  it("centers a flat series via the padded range", () => {
    const points = [
      { t: 0, mean: 5 },
      { t: 10, mean: 5 },
    ];
    expect(seriesPath(points, BOX)).toBe("M0.00 25.00 L100.00 25.00");
  });
});

describe("ranges and labels", () => {
  it("expands a degenerate range", () => {
    expect(valueRange([{ t: 0, mean: 2 }])).toEqual([1.5, 2.5]);
  });

  it("labels min, max and last", () => {
    const labels = axisLabels([
      { t: 0, mean: 150 },
      { t: 30, mean: 160 },
      { t: 60, mean: 155 },
    ]);
    expect(labels).toEqual({ min: "150.00", max: "160.00", last: "155.00" });
  });
});
