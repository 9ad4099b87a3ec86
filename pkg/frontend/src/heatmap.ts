/** Similarity heatmap rendering.
 *
 * Normalization mirrors the concept-map rule used elsewhere in the stack:
 * negative scores are clamped to 0, then the grid is min-max scaled to
 * [0, 255]; a constant grid maps to all zeros. Cells with no tile (null)
 * stay transparent.
 */

import type { HeatmapGrid, SlideMeta } from "./api.js";

export function normalizeGrid(
  values: (number | null)[][],
  positiveOnly = true,
): (number | null)[][] {
  const flat: number[] = [];
  const clamped = values.map((row) =>
    row.map((v) => {
      if (v === null) return null;
      const c = positiveOnly ? Math.max(v, 0) : v;
      flat.push(c);
      return c;
    }),
  );
  if (flat.length === 0) return clamped;
  const lo = Math.min(...flat);
  const hi = Math.max(...flat);
  if (hi <= lo) {
    return clamped.map((row) => row.map((v) => (v === null ? null : 0)));
  }
  return clamped.map((row) =>
    row.map((v) => (v === null ? null : Math.round(((v - lo) / (hi - lo)) * 255))),
  );
}

export const OVERLAY_COLOR: [number, number, number] = [255, 80, 0];

/** RGBA buffer (nx * ny * 4) for a normalized grid; alpha scales with the
 * normalized intensity times the requested opacity. */
export function overlayRgba(
  normalized: (number | null)[][],
  nx: number,
  ny: number,
  opacity: number,
  color: [number, number, number] = OVERLAY_COLOR,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(nx * ny * 4);
  for (let gy = 0; gy < ny; gy++) {
    for (let gx = 0; gx < nx; gx++) {
      const v = normalized[gy]?.[gx] ?? null;
      const base = (gy * nx + gx) * 4;
      out[base] = color[0];
      out[base + 1] = color[1];
      out[base + 2] = color[2];
      out[base + 3] = v === null ? 0 : Math.round(v * opacity);
    }
  }
  return out;
}

/** The grid must tile the slide exactly; a mismatch is a hard error the UI
 * surfaces as a banner. */
export function gridMatchesSlide(grid: HeatmapGrid, meta: SlideMeta): boolean {
  const nx = Math.ceil(meta.width / grid.tile_size);
  const ny = Math.ceil(meta.height / grid.tile_size);
  return (
    grid.nx === nx &&
    grid.ny === ny &&
    grid.values.length === ny &&
    grid.values.every((row) => row.length === nx)
  );
}
