/** Canvas slide viewer: tile rendering with pan/zoom, ROI drawing tools,
 * and an optional similarity heatmap overlay. */

import type { ApiClient, SlideMeta, TilePoint } from "./api.js";
import { normalizeGrid, overlayRgba } from "./heatmap.js";
import type { HeatmapGrid } from "./api.js";
import { Point, Rect, canSubmit, rasterizePolygon, rasterizeRect } from "./roi.js";

export type RoiTool = "rect" | "polygon" | null;

export class SlideViewer {
  private ctx: CanvasRenderingContext2D;
  private scale = 0.5;
  private offsetX = 0;
  private offsetY = 0;
  private tileImages = new Map<string, HTMLImageElement>();
  private meta: SlideMeta | null = null;

  tool: RoiTool = null;
  selection: TilePoint[] = [];
  private dragStart: Point | null = null;
  private dragRect: Rect | null = null;
  private polygonPoints: Point[] = [];
  private panStart: { x: number; y: number; ox: number; oy: number } | null = null;
  private overlay: { data: Uint8ClampedArray; nx: number; ny: number; tileSize: number } | null =
    null;
  private overlayOpacity = 0.6;
  private overlayGrid: HeatmapGrid | null = null;

  onSelectionChange: (selection: TilePoint[]) => void = () => undefined;

  constructor(private canvas: HTMLCanvasElement, private api: ApiClient) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.ctx = ctx;
    canvas.addEventListener("mousedown", (e) => this.onDown(e));
    canvas.addEventListener("mousemove", (e) => this.onMove(e));
    window.addEventListener("mouseup", (e) => this.onUp(e));
    canvas.addEventListener("dblclick", (e) => this.onDoubleClick(e));
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
  }

  show(meta: SlideMeta): void {
    this.meta = meta;
    this.tileImages.clear();
    this.selection = [];
    this.polygonPoints = [];
    this.dragRect = null;
    this.overlay = null;
    this.overlayGrid = null;
    const fit = Math.min(this.canvas.width / meta.width, this.canvas.height / meta.height);
    this.scale = fit;
    this.offsetX = (this.canvas.width - meta.width * fit) / 2;
    this.offsetY = (this.canvas.height - meta.height * fit) / 2;
    this.onSelectionChange(this.selection);
    this.draw();
  }

  setTool(tool: RoiTool): void {
    this.tool = tool;
    this.polygonPoints = [];
    this.dragRect = null;
    this.draw();
  }

  clearSelection(): void {
    this.selection = [];
    this.polygonPoints = [];
    this.dragRect = null;
    this.onSelectionChange(this.selection);
    this.draw();
  }

  setOverlay(grid: HeatmapGrid | null): void {
    this.overlayGrid = grid;
    this.rebuildOverlay();
  }

  setOverlayOpacity(opacity: number): void {
    this.overlayOpacity = opacity;
    this.rebuildOverlay();
  }

  private rebuildOverlay(): void {
    if (!this.overlayGrid) {
      this.overlay = null;
      this.draw();
      return;
    }
    const grid = this.overlayGrid;
    const normalized = normalizeGrid(grid.values);
    this.overlay = {
      data: overlayRgba(normalized, grid.nx, grid.ny, this.overlayOpacity),
      nx: grid.nx,
      ny: grid.ny,
      tileSize: grid.tile_size,
    };
    this.draw();
  }

  canSubmit(): boolean {
    return canSubmit(this.selection);
  }

  private toSlide(e: MouseEvent): Point {
    const bounds = this.canvas.getBoundingClientRect();
    return {
      x: (e.clientX - bounds.left - this.offsetX) / this.scale,
      y: (e.clientY - bounds.top - this.offsetY) / this.scale,
    };
  }

  private onDown(e: MouseEvent): void {
    if (!this.meta) return;
    if (this.tool === "rect") {
      const p = this.toSlide(e);
      this.dragStart = p;
      this.dragRect = { x0: p.x, y0: p.y, x1: p.x, y1: p.y };
    } else if (this.tool === "polygon") {
      const p = this.toSlide(e);
      this.polygonPoints.push(p);
      this.draw();
    } else {
      this.panStart = { x: e.clientX, y: e.clientY, ox: this.offsetX, oy: this.offsetY };
    }
  }

  private onMove(e: MouseEvent): void {
    if (this.dragStart && this.dragRect) {
      const p = this.toSlide(e);
      this.dragRect = { x0: this.dragStart.x, y0: this.dragStart.y, x1: p.x, y1: p.y };
      this.draw();
    } else if (this.panStart) {
      this.offsetX = this.panStart.ox + (e.clientX - this.panStart.x);
      this.offsetY = this.panStart.oy + (e.clientY - this.panStart.y);
      this.draw();
    }
  }

  private onUp(_e: MouseEvent): void {
    if (this.dragStart && this.dragRect && this.meta) {
      this.selection = rasterizeRect(this.dragRect, this.meta.tiles, this.meta.tile_size);
      this.onSelectionChange(this.selection);
    }
    this.dragStart = null;
    this.dragRect = null;
    this.panStart = null;
    this.draw();
  }

  private onDoubleClick(_e: MouseEvent): void {
    if (this.tool === "polygon" && this.meta && this.polygonPoints.length >= 3) {
      this.selection = rasterizePolygon(this.polygonPoints, this.meta.tiles, this.meta.tile_size);
      this.polygonPoints = [];
      this.onSelectionChange(this.selection);
      this.draw();
    }
  }

  private onWheel(e: WheelEvent): void {
    if (!this.meta) return;
    e.preventDefault();
    const bounds = this.canvas.getBoundingClientRect();
    const cx = e.clientX - bounds.left;
    const cy = e.clientY - bounds.top;
    const factor = e.deltaY < 0 ? 1.15 : 1 / 1.15;
    const next = Math.min(Math.max(this.scale * factor, 0.05), 8);
    this.offsetX = cx - ((cx - this.offsetX) / this.scale) * next;
    this.offsetY = cy - ((cy - this.offsetY) / this.scale) * next;
    this.scale = next;
    this.draw();
  }

  private tileImage(x: number, y: number): HTMLImageElement {
    const meta = this.meta!;
    const key = `${meta.slide_id}:${x}:${y}`;
    let img = this.tileImages.get(key);
    if (!img) {
      img = new Image();
      img.src = this.api.tileUrl(meta.slide_id, x, y);
      img.onload = () => this.draw();
      this.tileImages.set(key, img);
    }
    return img;
  }

  draw(): void {
    const { ctx, canvas, meta } = this;
    ctx.fillStyle = "#1c1f26";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (!meta) return;

    ctx.save();
    ctx.translate(this.offsetX, this.offsetY);
    ctx.scale(this.scale, this.scale);

    const size = meta.tile_size;
    for (let y = 0; y + size <= meta.height; y += size) {
      for (let x = 0; x + size <= meta.width; x += size) {
        const img = this.tileImage(x, y);
        if (img.complete && img.naturalWidth > 0) {
          ctx.drawImage(img, x, y, size, size);
        } else {
          ctx.fillStyle = "#2a2e38";
          ctx.fillRect(x, y, size, size);
        }
      }
    }

    if (this.overlay) {
      const { data, nx, ny, tileSize } = this.overlay;
      for (let gy = 0; gy < ny; gy++) {
        for (let gx = 0; gx < nx; gx++) {
          const base = (gy * nx + gx) * 4;
          const alpha = data[base + 3];
          if (alpha === 0) continue;
          ctx.fillStyle = `rgba(${data[base]},${data[base + 1]},${data[base + 2]},${alpha / 255})`;
          ctx.fillRect(gx * tileSize, gy * tileSize, tileSize, tileSize);
        }
      }
    }

    ctx.fillStyle = "rgba(64, 140, 255, 0.35)";
    ctx.strokeStyle = "rgba(64, 140, 255, 0.9)";
    ctx.lineWidth = 2 / this.scale;
    for (const tile of this.selection) {
      ctx.fillRect(tile.x, tile.y, size, size);
      ctx.strokeRect(tile.x, tile.y, size, size);
    }

    if (this.dragRect) {
      const r = this.dragRect;
      ctx.strokeStyle = "rgba(255, 220, 80, 0.9)";
      ctx.strokeRect(
        Math.min(r.x0, r.x1),
        Math.min(r.y0, r.y1),
        Math.abs(r.x1 - r.x0),
        Math.abs(r.y1 - r.y0),
      );
    }
    if (this.polygonPoints.length > 0) {
      ctx.strokeStyle = "rgba(255, 220, 80, 0.9)";
      ctx.beginPath();
      ctx.moveTo(this.polygonPoints[0].x, this.polygonPoints[0].y);
      for (const p of this.polygonPoints.slice(1)) ctx.lineTo(p.x, p.y);
      ctx.stroke();
    }
    ctx.restore();
  }
}
