"""Shared pipeline steps over a catalog: tiling, features, stain stats.

These are the operations the CLI subcommands wrap; keeping them here lets
tests and the service drive the same code paths.
"""

from __future__ import annotations

import numpy as np

from . import formats
from .catalog import Catalog, TileRef, compute_tissue_mask, enumerate_tiles, load_slide_image
from .stain import StainStats, features_36, slide_stain_stats


def tiles_for_catalog(
    catalog: Catalog,
    size: int = 256,
    stride: int | None = None,
    min_tissue: float = 0.25,
    mask_downsample: int = 16,
) -> dict[str, list[TileRef]]:
    """Tissue masks plus tile enumeration for every slide, in catalog order."""
    out: dict[str, list[TileRef]] = {}
    for rec in catalog:
        image = load_slide_image(catalog, rec.slide_id)
        mask = compute_tissue_mask(image, downsample=mask_downsample)
        out[rec.slide_id] = enumerate_tiles(
            rec, mask, size=size, stride=stride, min_tissue=min_tissue,
            slide_dims=(image.shape[1], image.shape[0]),
        )
    return out


def features_for_catalog(
    catalog: Catalog, tiles_by_slide: dict[str, list[TileRef]]
) -> formats.FeatureDump:
    """36-feature rows for every tile; slide indices follow catalog order."""
    slide_idx: list[int] = []
    coords: list[tuple[int, int]] = []
    rows: list[np.ndarray] = []
    for i, rec in enumerate(catalog):
        image = load_slide_image(catalog, rec.slide_id)
        for tile in tiles_by_slide.get(rec.slide_id, []):
            patch = image[tile.y : tile.y + tile.size, tile.x : tile.x + tile.size]
            rows.append(features_36(patch))
            slide_idx.append(i)
            coords.append((tile.x, tile.y))
    if not rows:
        features = np.zeros((0, 36), dtype=np.float32)
    else:
        features = np.asarray(rows, dtype=np.float32)
    return formats.FeatureDump(
        np.asarray(slide_idx, dtype=np.uint32),
        np.asarray(coords, dtype=np.uint32).reshape(-1, 2),
        features,
    )


def stain_stats_for_catalog(
    catalog: Catalog,
    tiles_by_slide: dict[str, list[TileRef]],
    max_tiles: int = 500,
    seed: int = 0,
) -> dict[str, StainStats]:
    """Per-slide transfer-space statistics; slides without tiles are skipped."""
    out = {}
    for rec in catalog:
        tiles = tiles_by_slide.get(rec.slide_id, [])
        if tiles:
            out[rec.slide_id] = slide_stain_stats(catalog, rec.slide_id, tiles, max_tiles, seed)
    return out


def dump_tiles(dump: formats.FeatureDump, catalog: Catalog, size: int = 256) -> list[TileRef]:
    """TileRefs for every feature-dump row, resolved through catalog order."""
    ids = [rec.slide_id for rec in catalog]
    return [
        TileRef(ids[int(s)], int(x), int(y), size)
        for s, (x, y) in zip(dump.slide_indices, dump.coords)
    ]
