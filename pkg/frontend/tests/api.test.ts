import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function fakeFetch(status: number, body: unknown) {
  const calls: { input: string; init?: RequestInit }[] = [];
  const fetcher = async (input: string, init?: RequestInit) => {
    calls.push({ input, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetcher, calls };
}

describe("ApiClient", () => {
  it("posts the exact query payload: slide id plus ROI tile list", async () => {
    const { fetcher, calls } = fakeFetch(200, { query_id: "abc" });
    const client = new ApiClient("", fetcher);
    const out = await client.submitQuery({
      slide_id: "slide_007",
      roi: [
        { x: 0, y: 0 },
        { x: 256, y: 0 },
      ],
      k: 5,
      top_n: 10,
    });
    expect(out.query_id).toBe("abc");
    expect(calls).toHaveLength(1);
    expect(calls[0].input).toBe("/api/queries");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      slide_id: "slide_007",
      roi: [
        { x: 0, y: 0 },
        { x: 256, y: 0 },
      ],
      k: 5,
      top_n: 10,
    });
  });

  it("surfaces backend error messages verbatim", async () => {
    const { fetcher } = fakeFetch(422, { error: "ROI tile (9,9) outside the tile grid" });
    const client = new ApiClient("", fetcher);
    await expect(client.queryResult("x")).rejects.toThrowError(
      new ApiError(422, "ROI tile (9,9) outside the tile grid"),
    );
  });

  it("maps network failures to status 0", async () => {
    const client = new ApiClient("", async () => {
      throw new Error("connection refused");
    });
    const failure = await client.health().catch((e: ApiError) => e);
    expect(failure).toBeInstanceOf(ApiError);
    expect((failure as ApiError).status).toBe(0);
  });

  it("builds tile and thumbnail urls", () => {
    const client = new ApiClient("http://svc");
    expect(client.tileUrl("s1", 256, 512)).toBe("http://svc/api/slides/s1/tiles/256/512");
    expect(client.thumbnailUrl("s1")).toBe("http://svc/api/slides/s1/thumbnail");
  });
});
