/** Application wiring: slide browser, ROI query panel, result gallery,
 * and similarity heatmap overlays. All state is in-session only. */

import { ApiClient, ApiError, QueryResult, SlideMeta, SlideSummary } from "./api.js";
import { buildGallery } from "./gallery.js";
import { gridMatchesSlide } from "./heatmap.js";
import { SlideViewer } from "./viewer.js";

const api = new ApiClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const banner = el<HTMLDivElement>("banner");
const slideList = el<HTMLUListElement>("slide-list");
const slideTitle = el<HTMLDivElement>("slide-title");
const selectionInfo = el<HTMLSpanElement>("selection-info");
const warning = el<HTMLSpanElement>("selection-warning");
const submitButton = el<HTMLButtonElement>("submit-query");
const gallery = el<HTMLDivElement>("gallery");
const kInput = el<HTMLInputElement>("k-input");
const topnInput = el<HTMLInputElement>("topn-input");
const opacityInput = el<HTMLInputElement>("opacity-input");
const overlayInfo = el<HTMLSpanElement>("overlay-info");

const viewer = new SlideViewer(el<HTMLCanvasElement>("viewer"), api);

let currentMeta: SlideMeta | null = null;
let currentQuery: QueryResult | null = null;
const metaCache = new Map<string, SlideMeta>();

function showError(message: string): void {
  banner.textContent = message;
  banner.classList.remove("hidden");
}

function clearError(): void {
  banner.classList.add("hidden");
}

async function loadSlides(): Promise<void> {
  try {
    const slides = await api.slides();
    slideList.replaceChildren(
      ...slides.map((slide) => slideEntry(slide)),
    );
    clearError();
  } catch (err) {
    showError(err instanceof ApiError ? `service error: ${err.message}` : String(err));
  }
}

function slideEntry(slide: SlideSummary): HTMLLIElement {
  const item = document.createElement("li");
  item.textContent = `${slide.slide_id} — ${slide.diagnosis ?? "?"} (${slide.staining}, ${slide.lab})`;
  item.title = slide.tissue_type;
  if (!slide.in_store) item.classList.add("disabled");
  item.addEventListener("click", () => void openSlide(slide.slide_id));
  return item;
}

async function fetchMeta(slideId: string): Promise<SlideMeta> {
  const cached = metaCache.get(slideId);
  if (cached) return cached;
  const meta = await api.slideMeta(slideId);
  metaCache.set(slideId, meta);
  return meta;
}

async function openSlide(slideId: string): Promise<void> {
  try {
    const meta = await fetchMeta(slideId);
    currentMeta = meta;
    slideTitle.textContent = `${meta.slide_id} — ${meta.tissue_type}, ${meta.staining}` +
      (meta.diagnosis ? ` — ${meta.diagnosis}` : "");
    viewer.setOverlay(null);
    overlayInfo.textContent = "";
    viewer.show(meta);
    clearError();
  } catch (err) {
    showError(err instanceof ApiError ? `service error: ${err.message}` : String(err));
  }
}

viewer.onSelectionChange = (selection) => {
  selectionInfo.textContent = `${selection.length} tiles selected`;
  submitButton.disabled = !viewer.canSubmit();
  const toolUsed = viewer.tool !== null;
  warning.textContent =
    toolUsed && selection.length === 0 ? "selection covers no tissue tiles" : "";
};

el<HTMLButtonElement>("tool-rect").addEventListener("click", () => viewer.setTool("rect"));
el<HTMLButtonElement>("tool-polygon").addEventListener("click", () => viewer.setTool("polygon"));
el<HTMLButtonElement>("tool-clear").addEventListener("click", () => viewer.clearSelection());

submitButton.addEventListener("click", () => void runQuery());

async function runQuery(): Promise<void> {
  if (!currentMeta || !viewer.canSubmit()) return;
  submitButton.disabled = true;
  try {
    const { query_id } = await api.submitQuery({
      slide_id: currentMeta.slide_id,
      roi: viewer.selection,
      k: Number(kInput.value) || 5,
      top_n: Number(topnInput.value) || 10,
    });
    let result = await api.queryResult(query_id);
    while (result.status === "pending") {
      await new Promise((resolve) => setTimeout(resolve, 250));
      result = await api.queryResult(query_id);
    }
    currentQuery = result;
    renderGallery(result);
    clearError();
  } catch (err) {
    showError(err instanceof ApiError ? `query failed: ${err.message}` : String(err));
  } finally {
    submitButton.disabled = !viewer.canSubmit();
  }
}

function renderGallery(result: QueryResult): void {
  const cards = buildGallery(result, (slideId) => api.thumbnailUrl(slideId));
  gallery.replaceChildren(
    ...cards.map((card) => {
      const node = document.createElement("div");
      node.className = "card";
      const img = document.createElement("img");
      img.src = card.thumbnailUrl;
      img.alt = card.slideId;
      const caption = document.createElement("div");
      caption.textContent = `#${card.rank} ${card.slideId} · ${card.scoreLabel} · ${card.diagnosis}`;
      node.append(img, caption);
      node.addEventListener("click", () => void showHeatmap(card.slideId));
      return node;
    }),
  );
}

async function showHeatmap(slideId: string): Promise<void> {
  if (!currentQuery) return;
  try {
    const [grid, meta] = await Promise.all([
      api.heatmap(currentQuery.query_id, slideId),
      fetchMeta(slideId),
    ]);
    if (!gridMatchesSlide(grid, meta)) {
      showError(`heatmap grid ${grid.nx}x${grid.ny} does not match slide ${slideId}`);
      return;
    }
    currentMeta = meta;
    slideTitle.textContent = `${meta.slide_id} — similarity to ROI`;
    viewer.show(meta);
    viewer.setOverlay(grid);
    overlayInfo.textContent = `overlay: ${slideId}`;
    clearError();
  } catch (err) {
    showError(err instanceof ApiError ? `heatmap failed: ${err.message}` : String(err));
  }
}

opacityInput.addEventListener("input", () => {
  viewer.setOverlayOpacity(Number(opacityInput.value) / 100);
});

void loadSlides();
