import { describe, expect, it } from "vitest";

import type { QueryResult } from "../src/api.js";
import { buildGallery, formatScore } from "../src/gallery.js";

function result(scores: number[]): QueryResult {
  return {
    query_id: "q",
    status: "done",
    slide_id: "query",
    k: 5,
    top_n: scores.length,
    results: scores.map((score, i) => ({
      rank: i + 1,
      slide_id: `s${i}`,
      score,
      diagnosis: i % 2 === 0 ? `diag_${i}` : null,
    })),
  };
}

describe("buildGallery", () => {
  it("preserves the backend ordering exactly, even if scores look unsorted", () => {
    // deliberately not descending: the UI must not re-rank
    const cards = buildGallery(result([0.2, 0.9, 0.5]), (id) => `/thumb/${id}`);
    expect(cards.map((c) => c.slideId)).toEqual(["s0", "s1", "s2"]);
    expect(cards.map((c) => c.rank)).toEqual([1, 2, 3]);
  });

  it("produces one card per result with thumbnail urls", () => {
    const cards = buildGallery(result(Array(10).fill(0.5)), (id) => `/api/slides/${id}/thumbnail`);
    expect(cards).toHaveLength(10);
    expect(cards[3].thumbnailUrl).toBe("/api/slides/s3/thumbnail");
  });

  it("rounds scores to exactly 2 decimals for display", () => {
    const cards = buildGallery(result([1, 0.456, 0.99999]), () => "");
    expect(cards.map((c) => c.scoreLabel)).toEqual(["1.00", "0.46", "1.00"]);
  });

  it("falls back to a placeholder when diagnosis is withheld", () => {
    const cards = buildGallery(result([0.5, 0.4]), () => "");
    expect(cards[1].diagnosis).toBe("(no diagnosis)");
  });
});

describe("formatScore", () => {
  it("always renders two decimals", () => {
    expect(formatScore(0)).toBe("0.00");
    expect(formatScore(-0.126)).toBe("-0.13");
  });
});
