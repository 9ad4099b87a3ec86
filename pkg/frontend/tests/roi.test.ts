import { describe, expect, it } from "vitest";

import type { TilePoint } from "../src/api.js";
import {
  canSubmit,
  normalizeRect,
  pointInPolygon,
  rasterizePolygon,
  rasterizeRect,
} from "../src/roi.js";

const TILE = 256;
const GRID: TilePoint[] = [
  { x: 0, y: 0 },
  { x: 256, y: 0 },
  { x: 0, y: 256 },
  { x: 256, y: 256 },
];

describe("rasterizeRect", () => {
  it("selects exactly the two tiles a covering rectangle spans", () => {
    // covers tiles (0,0) and (256,0): both centers inside, bottom row out
    const rect = { x0: 0, y0: 0, x1: 511, y1: 255 };
    expect(rasterizeRect(rect, GRID, TILE)).toEqual([
      { x: 0, y: 0 },
      { x: 256, y: 0 },
    ]);
  });

  it("uses the tile-center-inclusion rule", () => {
    // rectangle clips the corner of tile (0,0) but not its center
    const corner = { x0: 0, y0: 0, x1: 100, y1: 100 };
    expect(rasterizeRect(corner, GRID, TILE)).toEqual([]);
    // once the center (128,128) is inside, the tile is selected
    const toCenter = { x0: 0, y0: 0, x1: 128, y1: 128 };
    expect(rasterizeRect(toCenter, GRID, TILE)).toEqual([{ x: 0, y: 0 }]);
  });

  it("handles rectangles drawn from any corner", () => {
    const reversed = { x0: 511, y0: 255, x1: 0, y1: 0 };
    expect(rasterizeRect(reversed, GRID, TILE)).toEqual([
      { x: 0, y: 0 },
      { x: 256, y: 0 },
    ]);
  });

  it("normalizes corner order", () => {
    expect(normalizeRect({ x0: 5, y0: 9, x1: 1, y1: 2 })).toEqual({
      x0: 1,
      y0: 2,
      x1: 5,
      y1: 9,
    });
  });

  it("only selects tiles that exist in the grid", () => {
    const sparse: TilePoint[] = [{ x: 256, y: 256 }];
    const everything = { x0: -10, y0: -10, x1: 1000, y1: 1000 };
    expect(rasterizeRect(everything, sparse, TILE)).toEqual([{ x: 256, y: 256 }]);
  });
});

describe("rasterizePolygon", () => {
  it("selects tiles whose centers fall inside the polygon", () => {
    // triangle over the left column
    const polygon = [
      { x: 0, y: 0 },
      { x: 260, y: 260 },
      { x: 0, y: 520 },
    ];
    expect(rasterizePolygon(polygon, GRID, TILE)).toEqual([
      { x: 0, y: 0 },
      { x: 0, y: 256 },
    ]);
  });

  it("returns nothing for a polygon fully outside the tissue tiles", () => {
    const polygon = [
      { x: 600, y: 600 },
      { x: 700, y: 600 },
      { x: 650, y: 700 },
    ];
    expect(rasterizePolygon(polygon, GRID, TILE)).toEqual([]);
  });

  it("needs at least three vertices", () => {
    expect(rasterizePolygon([{ x: 0, y: 0 }, { x: 999, y: 999 }], GRID, TILE)).toEqual([]);
  });
});

describe("pointInPolygon", () => {
  const square = [
    { x: 0, y: 0 },
    { x: 10, y: 0 },
    { x: 10, y: 10 },
    { x: 0, y: 10 },
  ];

  it("classifies interior and exterior points", () => {
    expect(pointInPolygon({ x: 5, y: 5 }, square)).toBe(true);
    expect(pointInPolygon({ x: 15, y: 5 }, square)).toBe(false);
  });

  it("counts boundary points as inside", () => {
    expect(pointInPolygon({ x: 10, y: 5 }, square)).toBe(true);
  });

  it("handles concave polygons", () => {
    const concave = [
      { x: 0, y: 0 },
      { x: 10, y: 0 },
      { x: 10, y: 10 },
      { x: 5, y: 4 },
      { x: 0, y: 10 },
    ];
    expect(pointInPolygon({ x: 5, y: 8 }, concave)).toBe(false);
    expect(pointInPolygon({ x: 1, y: 2 }, concave)).toBe(true);
  });
});

describe("canSubmit", () => {
  it("disables submission for an empty selection", () => {
    expect(canSubmit([])).toBe(false);
    expect(canSubmit([{ x: 0, y: 0 }])).toBe(true);
  });
});
