"""Two-level weighted sampling over (slide group x tissue meta-cluster)
buckets.

Randomness comes from a counter-based generator (stateless index -> value),
so a stream can be restarted at any offset and draw i is a pure function of
(seed, i). Each draw consumes a fixed number of counter values: 2 in joint
mode, 3 in two-stage mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from .catalog import Catalog, TileRef
from .clustering import DROP
from .errors import ConfigError, DataError

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _mix(seed: int, idx: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer over (seed, index) -> doubles in [0, 1).

    Pure 64-bit integer ops, so the stream is identical across platforms.
    """
    with np.errstate(over="ignore"):
        z = (idx.astype(np.uint64) + np.uint64(1)) * _GAMMA + np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def counter_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """count uniforms at consecutive counter positions start..start+count-1."""
    return _mix(seed, np.arange(start, start + count, dtype=np.int64))


@dataclass
class WeightTable:
    group_weights: np.ndarray  # (G,) >= 0, positive sum
    meta_weights: np.ndarray  # (C,) >= 0, positive sum

    def __post_init__(self):
        self.group_weights = np.asarray(self.group_weights, dtype=np.float64)
        self.meta_weights = np.asarray(self.meta_weights, dtype=np.float64)
        for name, w in (("group", self.group_weights), ("meta", self.meta_weights)):
            if w.ndim != 1 or np.any(w < 0) or not np.isfinite(w).all() or w.sum() <= 0:
                raise ConfigError(f"{name} weights must be >= 0 with a positive sum")


def load_weight_table(path: str | Path) -> WeightTable:
    """Parse ``groups:`` and ``metas:`` id->weight mappings (dense ids)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "groups" not in doc or "metas" not in doc:
        raise ConfigError(f"{path}: expected 'groups' and 'metas' mappings")

    def vector(section, name):
        ids = sorted(int(k) for k in section)
        if ids != list(range(len(ids))):
            raise ConfigError(f"{path}: {name} ids must be dense starting at 0")
        return np.array([float(section[i]) for i in ids])

    return WeightTable(vector(doc["groups"], "group"), vector(doc["metas"], "meta"))


class SamplerIndex:
    """Tiles partitioned into (group_id, meta_id) buckets."""

    def __init__(self, buckets: dict[tuple[int, int], list[TileRef]]):
        self.buckets = {key: list(tiles) for key, tiles in sorted(buckets.items())}

    @property
    def bucket_sizes(self) -> dict[tuple[int, int], int]:
        return {key: len(tiles) for key, tiles in self.buckets.items()}

    @property
    def total_tiles(self) -> int:
        return sum(len(t) for t in self.buckets.values())

    def __len__(self) -> int:
        return len(self.buckets)


def build_index(catalog: Catalog, tiles: list[TileRef], meta_labels: np.ndarray) -> SamplerIndex:
    """Partition surviving tiles into (group, meta) buckets.

    meta_labels aligns with tiles; DROP rows are excluded. Slides must have
    groups assigned.
    """
    meta_labels = np.asarray(meta_labels, dtype=np.int64)
    if meta_labels.shape[0] != len(tiles):
        raise DataError(f"{len(tiles)} tiles but {meta_labels.shape[0]} meta labels")
    buckets: dict[tuple[int, int], list[TileRef]] = {}
    for tile, meta in zip(tiles, meta_labels):
        if meta == DROP:
            continue
        group = catalog.get(tile.slide_id).group_id
        if group < 0:
            raise DataError(f"slide {tile.slide_id!r} has no group assigned")
        buckets.setdefault((group, int(meta)), []).append(tile)
    return SamplerIndex(buckets)


def target_distribution(
    index: SamplerIndex, weights: WeightTable, mode: str = "joint"
) -> dict[tuple[int, int], float]:
    """Exact bucket probabilities the sampler draws from.

    Joint mode: P(g,c) proportional to w_g * w_c over non-empty buckets.
    Two-stage mode: P(g) proportional to w_g over groups with any eligible
    bucket, then P(c|g) proportional to w_c within the group.
    """
    wg, wc = weights.group_weights, weights.meta_weights
    keys = [
        (g, c)
        for (g, c), tiles in index.buckets.items()
        if tiles and g < wg.shape[0] and c < wc.shape[0] and wg[g] * wc[c] > 0
    ]
    if not keys:
        raise DataError("weight mass on empty buckets only")

    if mode == "joint":
        raw = np.array([wg[g] * wc[c] for g, c in keys])
        probs = raw / raw.sum()
        return dict(zip(keys, probs))
    if mode == "two-stage":
        groups = sorted({g for g, _ in keys})
        gw = np.array([wg[g] for g in groups])
        gprobs = gw / gw.sum()
        out: dict[tuple[int, int], float] = {}
        for g, gp in zip(groups, gprobs):
            metas = [c for gg, c in keys if gg == g]
            cw = np.array([wc[c] for c in metas])
            cprobs = cw / cw.sum()
            for c, cp in zip(metas, cprobs):
                out[(g, c)] = float(gp * cp)
        return out
    raise ConfigError(f"unknown sampling mode {mode!r}")


_VALUES_PER_DRAW = {"joint": 2, "two-stage": 3}


class _DrawPlan:
    """Precomputed cumulative tables for vectorized drawing."""

    def __init__(self, index: SamplerIndex, weights: WeightTable, mode: str):
        if mode not in _VALUES_PER_DRAW:
            raise ConfigError(f"unknown sampling mode {mode!r}")
        self.mode = mode
        target = target_distribution(index, weights, mode)
        self.keys = list(target.keys())
        self.tiles = [index.buckets[key] for key in self.keys]
        self.sizes = np.array([len(t) for t in self.tiles], dtype=np.int64)

        if mode == "joint":
            cum = np.cumsum(np.array(list(target.values())))
            cum[-1] = 1.0
            self.cum = cum
        else:
            wg, wc = weights.group_weights, weights.meta_weights
            self.groups = sorted({g for g, _ in self.keys})
            gw = np.array([wg[g] for g in self.groups], dtype=np.float64)
            self.group_cum = np.cumsum(gw / gw.sum())
            self.group_cum[-1] = 1.0
            self.meta_cum = []
            self.bucket_of = []
            for g in self.groups:
                entries = [(c, i) for i, (gg, c) in enumerate(self.keys) if gg == g]
                cw = np.array([wc[c] for c, _ in entries], dtype=np.float64)
                cum = np.cumsum(cw / cw.sum())
                cum[-1] = 1.0
                self.meta_cum.append(cum)
                self.bucket_of.append(np.array([i for _, i in entries], dtype=np.int64))

    def _lane(self, seed: int, offset: int, n: int, lane: int) -> np.ndarray:
        per = _VALUES_PER_DRAW[self.mode]
        idx = offset * per + lane + per * np.arange(n, dtype=np.int64)
        return _mix(seed, idx)

    def draw(self, seed: int, offset: int, n: int) -> list[TileRef]:
        if self.mode == "joint":
            u = self._lane(seed, offset, n, 0)
            bucket_idx = np.searchsorted(self.cum, u, side="right")
        else:
            gi = np.searchsorted(self.group_cum, self._lane(seed, offset, n, 0), side="right")
            u_meta = self._lane(seed, offset, n, 1)
            bucket_idx = np.empty(n, dtype=np.int64)
            for slot in range(len(self.groups)):
                hit = gi == slot
                if not hit.any():
                    continue
                mi = np.searchsorted(self.meta_cum[slot], u_meta[hit], side="right")
                bucket_idx[hit] = self.bucket_of[slot][mi]

        u_tile = self._lane(seed, offset, n, _VALUES_PER_DRAW[self.mode] - 1)
        sizes = self.sizes[bucket_idx]
        within = np.minimum((u_tile * sizes).astype(np.int64), sizes - 1)
        return [self.tiles[int(b)][int(j)] for b, j in zip(bucket_idx, within)]


def draw(
    index: SamplerIndex,
    weights: WeightTable,
    n: int,
    seed: int = 0,
    offset: int = 0,
    mode: str = "joint",
) -> list[TileRef]:
    """n weighted draws (with replacement across draws), deterministic in
    (seed, offset)."""
    return _DrawPlan(index, weights, mode).draw(seed, offset, n)


def stream(
    index: SamplerIndex,
    weights: WeightTable,
    seed: int = 0,
    offset: int = 0,
    mode: str = "joint",
    batch: int = 1024,
) -> Iterator[TileRef]:
    """Unbounded deterministic tile sequence; element i is independent of
    how the stream is consumed or restarted."""
    plan = _DrawPlan(index, weights, mode)
    pos = offset
    while True:
        for tile in plan.draw(seed, pos, batch):
            yield tile
        pos += batch


def empirical_frequencies(
    index: SamplerIndex, drawn: list[TileRef], catalog: Catalog, meta_of_tile: dict[TileRef, int]
) -> dict[tuple[int, int], float]:
    """Observed bucket frequencies of a drawn sequence, for audit dumps."""
    counts: dict[tuple[int, int], int] = {key: 0 for key in index.buckets}
    for tile in drawn:
        group = catalog.get(tile.slide_id).group_id
        counts[(group, meta_of_tile[tile])] += 1
    total = max(len(drawn), 1)
    return {key: c / total for key, c in counts.items()}
