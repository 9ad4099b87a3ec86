"""Embedding store and reference-case search.

Scoring: for every ROI patch, cosine similarity to all candidate patches;
a candidate slide's score is the mean over ROI patches of the mean of each
patch's top-k similarities. Search is exact and exhaustive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .catalog import Catalog, TileRef, read_tile
from .errors import DataError
from .stain import FEATURE_DIM, features_36

logger = logging.getLogger(__name__)


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """L2-normalize rows; zero rows stay zero (their cosine is 0)."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return m / np.where(norms > 0, norms, 1.0)


class FeatureEmbedder:
    """Reference embedder: the 36 color statistics, L2-normalized."""

    dim = FEATURE_DIM

    def embed(self, image: np.ndarray) -> np.ndarray:
        return self.embed_features(features_36(image)[None, :])[0]

    def embed_features(self, features: np.ndarray) -> np.ndarray:
        return normalize_rows(features)


class RandomProjectionEmbedder:
    """Seeded Gaussian projection of the 36 color statistics to any dim."""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise DataError(f"embedder dim must be >= 1, got {dim}")
        self.dim = dim
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((FEATURE_DIM, dim)) / np.sqrt(FEATURE_DIM)

    def embed(self, image: np.ndarray) -> np.ndarray:
        return self.embed_features(features_36(image)[None, :])[0]

    def embed_features(self, features: np.ndarray) -> np.ndarray:
        return normalize_rows(np.asarray(features, dtype=np.float64) @ self._projection)


@dataclass
class SlideEmbeddings:
    slide_id: str
    diagnosis: str | None
    coords: np.ndarray  # (T, 2) uint32, columns (x, y)
    vectors: np.ndarray  # (T, dim) float32


class EmbeddingStore:
    """Per-slide embedding matrices with tile coordinates and diagnoses."""

    def __init__(self, dim: int, slides: list[SlideEmbeddings]):
        self.dim = dim
        self.slides = slides
        self._by_id: dict[str, SlideEmbeddings] = {}
        for s in slides:
            if s.slide_id in self._by_id:
                raise DataError(f"duplicate slide_id {s.slide_id!r} in store")
            if s.vectors.shape != (s.coords.shape[0], dim):
                raise DataError(f"slide {s.slide_id!r}: vectors shape {s.vectors.shape}")
            self._by_id[s.slide_id] = s

    def __len__(self) -> int:
        return len(self.slides)

    def __contains__(self, slide_id: str) -> bool:
        return slide_id in self._by_id

    def get(self, slide_id: str) -> SlideEmbeddings:
        try:
            return self._by_id[slide_id]
        except KeyError:
            raise DataError(f"slide {slide_id!r} not in store")

    @property
    def total_tiles(self) -> int:
        return sum(s.coords.shape[0] for s in self.slides)

    def save(self, path: str | Path) -> None:
        formats.write_embedding_store(
            path, self.dim, [(s.slide_id, s.diagnosis, s.coords, s.vectors) for s in self.slides]
        )

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingStore":
        dim, raw = formats.read_embedding_store(path)
        return cls(dim, [SlideEmbeddings(sid, diag, coords, vecs) for sid, diag, coords, vecs in raw])


def build_store(
    catalog: Catalog,
    tiles_by_slide: dict[str, list[TileRef]],
    embedder,
    out_path: str | Path | None = None,
) -> EmbeddingStore:
    """Embed every tile of every slide; slides with no tiles are skipped."""
    if embedder.dim < 1:
        raise DataError("embedder dim must be positive")
    slides = []
    for rec in catalog:
        tiles = tiles_by_slide.get(rec.slide_id, [])
        if not tiles:
            logger.warning("slide %r has no tiles; skipped from store", rec.slide_id)
            continue
        coords = np.array([(t.x, t.y) for t in tiles], dtype=np.uint32)
        vectors = np.empty((len(tiles), embedder.dim), dtype=np.float32)
        for i, tile in enumerate(tiles):
            vectors[i] = embedder.embed(read_tile(catalog, tile))
        slides.append(SlideEmbeddings(rec.slide_id, rec.diagnosis, coords, vectors))
    store = EmbeddingStore(embedder.dim, slides)
    if out_path is not None:
        store.save(out_path)
    return store


def store_from_features(
    catalog: Catalog, dump, embedder, out_path: str | Path | None = None
) -> EmbeddingStore:
    """Build a store from a precomputed feature dump (no image reads).

    Only valid for embedders that are functions of the 36 features, i.e.
    those providing embed_features.
    """
    slides = []
    for i, rec in enumerate(catalog):
        rows = np.flatnonzero(dump.slide_indices == i)
        if rows.size == 0:
            logger.warning("slide %r has no feature rows; skipped from store", rec.slide_id)
            continue
        vectors = embedder.embed_features(dump.features[rows].astype(np.float64))
        slides.append(
            SlideEmbeddings(
                rec.slide_id,
                rec.diagnosis,
                dump.coords[rows].astype(np.uint32),
                vectors.astype(np.float32),
            )
        )
    store = EmbeddingStore(embedder.dim, slides)
    if out_path is not None:
        store.save(out_path)
    return store


@dataclass
class QueryROI:
    """Region of interest: a slide id plus the tile origins inside it."""

    slide_id: str
    tiles: list[tuple[int, int]]

    def __post_init__(self):
        if not self.tiles:
            raise DataError("ROI must contain at least one tile")
        self.tiles = [(int(x), int(y)) for x, y in self.tiles]


@dataclass
class ResultEntry:
    slide_id: str
    score: float
    diagnosis: str | None


@dataclass
class RankedResult:
    """Candidates ordered by descending score; ties break on slide_id."""

    entries: list[ResultEntry]
    # slide_id -> (coords, max-over-ROI cosine per tile), for heatmap display
    similarity_maps: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def slide_score(roi_vectors: np.ndarray, candidate_vectors: np.ndarray, k: int) -> float:
    """Mean over ROI patches of the mean top-k cosine similarity."""
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    a = normalize_rows(np.atleast_2d(roi_vectors))
    b = normalize_rows(np.atleast_2d(candidate_vectors))
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise DataError("roi and candidate must each have at least one vector")
    sims = a @ b.T
    return _mean_topk_score(sims, k)


def _mean_topk_score(sims: np.ndarray, k: int) -> float:
    # the outer mean uses an exactly-rounded sum so the score is invariant
    # to ROI patch order
    kk = min(k, sims.shape[1])
    top = np.partition(sims, sims.shape[1] - kk, axis=1)[:, sims.shape[1] - kk :]
    per_roi = top.mean(axis=1)
    return math.fsum(per_roi) / per_roi.shape[0]


def _roi_vectors(
    store: EmbeddingStore,
    roi: QueryROI,
    embedder=None,
    catalog: Catalog | None = None,
) -> np.ndarray:
    if roi.slide_id in store:
        slide = store.get(roi.slide_id)
        pos = {(int(x), int(y)): i for i, (x, y) in enumerate(slide.coords)}
        rows = []
        for xy in roi.tiles:
            if xy not in pos:
                raise DataError(f"ROI tile {xy} not in slide {roi.slide_id!r} tile grid")
            rows.append(slide.vectors[pos[xy]])
        return np.array(rows, dtype=np.float64)
    if embedder is None or catalog is None:
        raise DataError(
            f"slide {roi.slide_id!r} not in store; an embedder and catalog are required"
        )
    return np.array(
        [embedder.embed(read_tile(catalog, TileRef(roi.slide_id, x, y))) for x, y in roi.tiles]
    )


def query_topn(
    store: EmbeddingStore,
    roi: QueryROI,
    k: int = 5,
    topn: int = 10,
    embedder=None,
    catalog: Catalog | None = None,
    include_self: bool = False,
) -> RankedResult:
    """Rank all candidate slides against the ROI.

    The query slide is excluded unless include_self is set. Each returned
    candidate also carries its per-tile max-over-ROI similarity map.
    """
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    candidates = [s for s in store.slides if include_self or s.slide_id != roi.slide_id]
    if not candidates:
        raise DataError("store has no candidate slides for this query")
    a = normalize_rows(_roi_vectors(store, roi, embedder, catalog))

    scored: list[tuple[ResultEntry, np.ndarray]] = []
    for cand in candidates:
        b = normalize_rows(cand.vectors)
        sims = a @ b.T
        score = _mean_topk_score(sims, k)
        scored.append((ResultEntry(cand.slide_id, score, cand.diagnosis), sims.max(axis=0)))

    scored.sort(key=lambda item: (-item[0].score, item[0].slide_id))
    top_entries = scored[: max(topn, 0)]
    maps = {
        entry.slide_id: (store.get(entry.slide_id).coords, sim_map)
        for entry, sim_map in top_entries
    }
    return RankedResult([entry for entry, _ in top_entries], maps)


def topk_accuracy(
    results: list[RankedResult],
    true_diagnoses: list[str],
    k_list: tuple[int, ...] = (1, 10),
) -> dict[int, float]:
    """Fraction of queries whose top-k results include the true diagnosis."""
    if len(results) != len(true_diagnoses):
        raise DataError("results and diagnoses must align")
    if not results:
        raise DataError("no queries to score")
    k_max = max(k_list)
    hits = {kk: 0 for kk in k_list}
    for ranked, truth in zip(results, true_diagnoses):
        if not truth:
            raise DataError("query with unknown diagnosis label")
        if len(ranked.entries) < k_max:
            raise DataError(f"each query needs >= {k_max} ranked results")
        for kk in k_list:
            if any(e.diagnosis == truth for e in ranked.entries[:kk]):
                hits[kk] += 1
    return {kk: hits[kk] / len(results) for kk in k_list}
