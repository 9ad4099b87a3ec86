/** Result gallery view-model: exactly the backend ordering and scores,
 * no client-side re-ranking; scores display with 2 decimals. */

import type { QueryResult } from "./api.js";

export interface GalleryCard {
  rank: number;
  slideId: string;
  scoreLabel: string;
  diagnosis: string;
  thumbnailUrl: string;
}

export function formatScore(score: number): string {
  return score.toFixed(2);
}

export function buildGallery(
  result: QueryResult,
  thumbnailUrl: (slideId: string) => string,
): GalleryCard[] {
  return result.results.map((entry) => ({
    rank: entry.rank,
    slideId: entry.slide_id,
    scoreLabel: formatScore(entry.score),
    diagnosis: entry.diagnosis ?? "(no diagnosis)",
    thumbnailUrl: thumbnailUrl(entry.slide_id),
  }));
}
