/** Typed client for the reference-case-search HTTP API. */

export interface TilePoint {
  x: number;
  y: number;
}

export interface SlideSummary {
  slide_id: string;
  diagnosis: string | null;
  tissue_type: string;
  staining: string;
  staining_category: string;
  lab: string;
  in_store: boolean;
}

export interface SlideMeta extends SlideSummary {
  case_id: string;
  scanner: string;
  prep: string;
  mpp: number;
  width: number;
  height: number;
  tile_size: number;
  tiles: TilePoint[];
}

export interface QueryRequest {
  slide_id: string;
  roi: TilePoint[];
  k: number;
  top_n: number;
}

export interface ResultEntry {
  rank: number;
  slide_id: string;
  score: number;
  diagnosis: string | null;
}

export interface QueryResult {
  query_id: string;
  status: string;
  slide_id: string;
  k: number;
  top_n: number;
  results: ResultEntry[];
}

export interface HeatmapGrid {
  slide_id: string;
  tile_size: number;
  nx: number;
  ny: number;
  values: (number | null)[][];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetcher: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetcher(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const text = await response.text();
    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const body = JSON.parse(text) as { error?: string };
        if (body.error) message = body.error;
      } catch {
        /* non-JSON error body: keep the status line */
      }
      throw new ApiError(response.status, message);
    }
    return JSON.parse(text) as T;
  }

  health(): Promise<{ status: string; slides: number }> {
    return this.request("/api/health");
  }

  slides(): Promise<SlideSummary[]> {
    return this.request("/api/slides");
  }

  slideMeta(slideId: string): Promise<SlideMeta> {
    return this.request(`/api/slides/${encodeURIComponent(slideId)}/meta`);
  }

  tileUrl(slideId: string, x: number, y: number): string {
    return `${this.base}/api/slides/${encodeURIComponent(slideId)}/tiles/${x}/${y}`;
  }

  thumbnailUrl(slideId: string): string {
    return `${this.base}/api/slides/${encodeURIComponent(slideId)}/thumbnail`;
  }

  /** Builds the exact query payload: ROI tiles as {x, y} origin pairs. */
  submitQuery(request: QueryRequest): Promise<{ query_id: string }> {
    return this.request("/api/queries", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        slide_id: request.slide_id,
        roi: request.roi.map((t) => ({ x: t.x, y: t.y })),
        k: request.k,
        top_n: request.top_n,
      }),
    });
  }

  queryResult(queryId: string): Promise<QueryResult> {
    return this.request(`/api/queries/${encodeURIComponent(queryId)}`);
  }

  heatmap(queryId: string, slideId: string): Promise<HeatmapGrid> {
    return this.request(
      `/api/queries/${encodeURIComponent(queryId)}/heatmap/${encodeURIComponent(slideId)}`,
    );
  }
}
