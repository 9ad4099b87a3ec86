"""Patch clustering: per-slide subsampling, Lloyd k-means, k-NN label
propagation, and the expert merge map from raw clusters to weighted
meta-clusters."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .catalog import Catalog, TileRef
from .errors import ConfigError, DataError

DROP = -1  # meta label for patches removed by the merge map


def subsample_patches(
    catalog: Catalog,
    tiles_by_slide: dict[str, list[TileRef]],
    n_per_slide: int = 500,
    seed: int = 0,
) -> list[TileRef]:
    """Uniform without-replacement sample of up to n_per_slide tiles per slide.

    Slides are visited in catalog order so the selection is deterministic
    for a given seed.
    """
    rng = np.random.default_rng(seed)
    sample: list[TileRef] = []
    for rec in catalog:
        tiles = tiles_by_slide.get(rec.slide_id, [])
        if not tiles:
            continue
        count = min(n_per_slide, len(tiles))
        chosen = rng.choice(len(tiles), size=count, replace=False)
        sample.extend(tiles[int(i)] for i in sorted(chosen))
    return sample


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, dim) float64
    inertia: float
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list)


def _pairwise_sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * (x @ c.T)
        + np.einsum("ij,ij->i", c, c)[None, :]
    )
    return np.maximum(d2, 0.0)


def assign_clusters(
    x: np.ndarray, centroids: np.ndarray, chunk: int = 16384
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels and squared distances, chunked over points."""
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        d2 = _pairwise_sq_dists(x[start : start + chunk], centroids)
        labels[start : start + chunk] = np.argmin(d2, axis=1)
        dists[start : start + chunk] = d2[np.arange(d2.shape[0]), labels[start : start + chunk]]
    return labels, dists


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[int(rng.integers(n))]
    d2 = _pairwise_sq_dists(x, centroids[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = x[idx]
        d2 = np.minimum(d2, _pairwise_sq_dists(x, centroids[j : j + 1])[:, 0])
    return centroids


def kmeans_fit(
    features: np.ndarray,
    k: int = 100,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> ClusterModel:
    """Seeded k-means++ / Lloyd. Empty clusters are reseeded to the point
    currently farthest from its centroid; inertia is recorded after every
    assignment step and is non-increasing."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected 2-D feature matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < k:
        raise DataError(f"need at least k={k} points, got {n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, k, rng)
    history: list[float] = []
    iterations = 0

    for _ in range(max_iter):
        labels, d2 = assign_clusters(x, centroids)
        history.append(float(d2.sum()))

        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        new_centroids = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1.0), 0.0)

        empty = np.flatnonzero(counts == 0)
        if empty.size:
            d2_pool = d2.copy()
            for j in empty:
                far = int(np.argmax(d2_pool))
                new_centroids[j] = x[far]
                d2_pool[far] = -np.inf
        iterations += 1

        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break

    _, d2 = assign_clusters(x, centroids)
    final_inertia = float(d2.sum())
    history.append(final_inertia)
    return ClusterModel(k, centroids, final_inertia, iterations, history)


def propagate_labels(
    labeled_features: np.ndarray,
    labeled_ids: np.ndarray,
    features: np.ndarray,
    knn: int = 1,
    chunk: int = 4096,
) -> np.ndarray:
    """Majority label of the knn nearest labeled points (Euclidean).

    Distance ties resolve to the lower labeled index; vote ties resolve to
    the smallest cluster id.
    """
    ref = np.asarray(labeled_features, dtype=np.float64)
    ids = np.asarray(labeled_ids, dtype=np.int64)
    if ref.shape[0] == 0:
        raise DataError("labeled sample set is empty")
    if knn < 1:
        raise DataError("knn must be >= 1")
    knn = min(knn, ref.shape[0])

    x = np.asarray(features, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    n_classes = int(ids.max()) + 1
    for start in range(0, x.shape[0], chunk):
        d2 = _pairwise_sq_dists(x[start : start + chunk], ref)
        if knn == 1:
            out[start : start + chunk] = ids[np.argmin(d2, axis=1)]
            continue
        order = np.argsort(d2, axis=1, kind="stable")[:, :knn]
        votes = ids[order]
        for row in range(votes.shape[0]):
            counts = np.bincount(votes[row], minlength=n_classes)
            out[start + row] = int(np.argmax(counts))
    return out


@dataclass
class MergeMap:
    """Total map raw cluster id -> meta id (or DROP) with per-meta weights."""

    table: np.ndarray  # (n_raw,) int64, DROP for removed clusters
    meta_weights: np.ndarray  # (n_meta,) float64
    descriptions: list[str]

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=np.int64)
        self.meta_weights = np.asarray(self.meta_weights, dtype=np.float64)
        n_meta = self.meta_weights.shape[0]
        kept = self.table[self.table != DROP]
        if kept.size == 0:
            raise ConfigError("merge map drops every cluster")
        if kept.min() < 0 or kept.max() >= n_meta:
            raise ConfigError(f"meta ids must be in [0, {n_meta}), got {sorted(set(kept))}")
        if np.any(self.meta_weights < 0) or self.meta_weights.sum() <= 0:
            raise ConfigError("meta weights must be >= 0 with a positive sum")

    @property
    def n_raw(self) -> int:
        return self.table.shape[0]

    @property
    def n_meta(self) -> int:
        return self.meta_weights.shape[0]


def load_merge_map(path: str | Path) -> MergeMap:
    """Parse a merge-map config.

    Schema: ``clusters: {raw_id: meta_id | DROP}`` covering every raw id in
    [0, n_raw), and ``metas: {meta_id: {weight, description}}``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "clusters" not in doc or "metas" not in doc:
        raise ConfigError(f"{path}: expected 'clusters' and 'metas' mappings")

    clusters = doc["clusters"]
    n_raw = len(clusters)
    if sorted(int(k) for k in clusters) != list(range(n_raw)):
        raise ConfigError(f"{path}: cluster ids must cover 0..{n_raw - 1} with no gaps")

    metas = doc["metas"]
    meta_ids = sorted(int(k) for k in metas)
    if meta_ids != list(range(len(meta_ids))):
        raise ConfigError(f"{path}: meta ids must be dense starting at 0")

    table = np.empty(n_raw, dtype=np.int64)
    for raw_id, meta in clusters.items():
        if isinstance(meta, str) and meta.upper() == "DROP":
            table[int(raw_id)] = DROP
        else:
            table[int(raw_id)] = int(meta)
    weights = np.array([float(metas[m].get("weight", 1.0)) for m in meta_ids])
    descriptions = [str(metas[m].get("description", "")) for m in meta_ids]
    return MergeMap(table, weights, descriptions)


def apply_merge_map(raw_labels: np.ndarray, merge_map: MergeMap) -> np.ndarray:
    """Map raw cluster labels to meta labels; dropped rows become DROP."""
    raw = np.asarray(raw_labels, dtype=np.int64)
    if raw.size and (raw.min() < 0 or raw.max() >= merge_map.n_raw):
        raise DataError(
            f"raw labels outside [0, {merge_map.n_raw}): "
            f"min {raw.min() if raw.size else None}, max {raw.max() if raw.size else None}"
        )
    return merge_map.table[raw]
