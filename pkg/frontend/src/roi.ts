/** ROI geometry: rasterizing drawn shapes onto the slide's tile grid.
 *
 * A tile is selected iff its center lies inside the drawn region. Only
 * tiles that exist in the slide's grid (tissue tiles known to the store)
 * are eligible; selection order follows the grid order.
 */

import type { TilePoint } from "./api.js";

export interface Point {
  x: number;
  y: number;
}

export interface Rect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export function normalizeRect(rect: Rect): Rect {
  return {
    x0: Math.min(rect.x0, rect.x1),
    y0: Math.min(rect.y0, rect.y1),
    x1: Math.max(rect.x0, rect.x1),
    y1: Math.max(rect.y0, rect.y1),
  };
}

export function tileCenter(tile: TilePoint, tileSize: number): Point {
  return { x: tile.x + tileSize / 2, y: tile.y + tileSize / 2 };
}

export function rasterizeRect(rect: Rect, tiles: TilePoint[], tileSize: number): TilePoint[] {
  const r = normalizeRect(rect);
  return tiles.filter((tile) => {
    const c = tileCenter(tile, tileSize);
    return c.x >= r.x0 && c.x <= r.x1 && c.y >= r.y0 && c.y <= r.y1;
  });
}

/** Ray-casting point-in-polygon; boundary points count as inside. */
export function pointInPolygon(p: Point, polygon: Point[]): boolean {
  if (polygon.length < 3) return false;
  let inside = false;
  for (let i = 0, j = polygon.length - 1; i < polygon.length; j = i++) {
    const a = polygon[i];
    const b = polygon[j];
    if (onSegment(p, a, b)) return true;
    const crosses =
      a.y > p.y !== b.y > p.y &&
      p.x < ((b.x - a.x) * (p.y - a.y)) / (b.y - a.y) + a.x;
    if (crosses) inside = !inside;
  }
  return inside;
}

function onSegment(p: Point, a: Point, b: Point): boolean {
  const cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  if (Math.abs(cross) > 1e-9) return false;
  const dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
  const len2 = (b.x - a.x) ** 2 + (b.y - a.y) ** 2;
  return dot >= 0 && dot <= len2;
}

export function rasterizePolygon(
  polygon: Point[],
  tiles: TilePoint[],
  tileSize: number,
): TilePoint[] {
  if (polygon.length < 3) return [];
  return tiles.filter((tile) => pointInPolygon(tileCenter(tile, tileSize), polygon));
}

export function canSubmit(selection: TilePoint[]): boolean {
  return selection.length > 0;
}
