import { describe, expect, it } from "vitest";

import type { HeatmapGrid, SlideMeta } from "../src/api.js";
import { gridMatchesSlide, normalizeGrid, overlayRgba } from "../src/heatmap.js";

describe("normalizeGrid", () => {
  it("applies the documented rule: clamp negatives, min-max to 0..255", () => {
    const grid = [
      [-0.5, 0.0],
      [0.25, 0.5],
    ];
    expect(normalizeGrid(grid)).toEqual([
      [0, 0],
      [128, 255],
    ]);
  });

  it("maps a uniform grid to all zeros", () => {
    expect(normalizeGrid([[0.7, 0.7], [0.7, 0.7]])).toEqual([
      [0, 0],
      [0, 0],
    ]);
  });

  it("is invariant to positive scaling", () => {
    const grid = [[0.1, 0.4, 0.9]];
    expect(normalizeGrid(grid.map((r) => r.map((v) => v * 3)))).toEqual(normalizeGrid(grid));
  });

  it("keeps null cells null and excludes them from min-max", () => {
    const grid = [[null, 0.2], [0.4, null]];
    expect(normalizeGrid(grid)).toEqual([
      [null, 0],
      [255, null],
    ]);
  });

  it("highlights a single hot tile", () => {
    const grid = [
      [0.1, 0.1],
      [0.1, 0.9],
    ];
    expect(normalizeGrid(grid)).toEqual([
      [0, 0],
      [0, 255],
    ]);
  });

  it("matches the snapshot for a representative API grid", () => {
    const grid = [
      [0.91, 0.42, null],
      [-0.1, 0.05, 0.42],
    ];
    expect(normalizeGrid(grid)).toMatchSnapshot();
  });
});

describe("overlayRgba", () => {
  it("renders alpha proportional to normalized intensity times opacity", () => {
    const normalized = [
      [0, 255],
      [null, 128],
    ];
    const rgba = overlayRgba(normalized, 2, 2, 0.5, [255, 80, 0]);
    // cell (0,0): intensity 0 -> alpha 0
    expect(rgba[3]).toBe(0);
    // cell (1,0): intensity 255 -> alpha round(255 * 0.5)
    expect([rgba[4], rgba[5], rgba[6], rgba[7]]).toEqual([255, 80, 0, 128]);
    // cell (0,1): null -> fully transparent
    expect(rgba[11]).toBe(0);
    // cell (1,1): intensity 128 -> alpha 64
    expect(rgba[15]).toBe(64);
  });

  it("opacity 0 leaves the slide unchanged (all alpha 0)", () => {
    const normalized = [[255, 128]];
    const rgba = overlayRgba(normalized, 2, 1, 0);
    expect(rgba[3]).toBe(0);
    expect(rgba[7]).toBe(0);
  });

  it("matches the RGBA snapshot", () => {
    const rgba = overlayRgba([[64, null], [255, 0]], 2, 2, 0.6);
    expect(Array.from(rgba)).toMatchSnapshot();
  });
});

describe("gridMatchesSlide", () => {
  const meta = { width: 512, height: 512, tile_size: 256 } as SlideMeta;

  it("accepts a grid that tiles the slide exactly", () => {
    const grid: HeatmapGrid = {
      slide_id: "s",
      tile_size: 256,
      nx: 2,
      ny: 2,
      values: [
        [0.1, 0.2],
        [0.3, null],
      ],
    };
    expect(gridMatchesSlide(grid, meta)).toBe(true);
  });

  it("rejects a dimension mismatch", () => {
    const grid: HeatmapGrid = {
      slide_id: "s",
      tile_size: 256,
      nx: 3,
      ny: 2,
      values: [
        [0.1, 0.2, 0.3],
        [0.3, null, 0.1],
      ],
    };
    expect(gridMatchesSlide(grid, meta)).toBe(false);
  });
});
