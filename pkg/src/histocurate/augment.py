"""Training-view augmentation: stain transfer toward another slide's color
statistics plus the 8 dihedral transforms. No solarization is ever applied."""

from __future__ import annotations

import numpy as np

from .catalog import Catalog, TileRef, read_tile
from .errors import DataError
from .color import lalphabeta_to_rgb, rgb_to_lalphabeta
from .stain import StainStats

_STD_FLOOR = 1e-6


def transfer_channels(
    values: np.ndarray, src: StainStats, tgt: StainStats, eps: float = _STD_FLOOR
) -> np.ndarray:
    """Per-channel moment matching in the transfer space."""
    scale = tgt.std / np.maximum(src.std, eps)
    return (values - src.mean) * scale + tgt.mean


def reinhard_transfer(image: np.ndarray, src: StainStats, tgt: StainStats) -> np.ndarray:
    """Shift the image's channel statistics from src to tgt.

    Works in the decorrelated log color space; the result is converted back
    to RGB, clamped to [0, 255], and rounded to uint8.
    """
    x = rgb_to_lalphabeta(image)
    rgb = lalphabeta_to_rgb(transfer_channels(x, src, tgt))
    return np.rint(rgb).astype(np.uint8)


def dihedral_augment(image: np.ndarray, code: int) -> np.ndarray:
    """One of the 8 square symmetries: code = flip * 4 + quarter_turns."""
    arr = np.asarray(image)
    if arr.shape[0] != arr.shape[1]:
        raise DataError(f"dihedral transform needs a square image, got {arr.shape[:2]}")
    if not 0 <= code < 8:
        raise DataError(f"dihedral code must be in [0, 8), got {code}")
    out = np.rot90(arr, k=code % 4)
    if code >= 4:
        out = np.fliplr(out)
    return np.ascontiguousarray(out)


def augment_view(
    tile: TileRef,
    catalog: Catalog,
    stain_stats: dict[str, StainStats],
    seed: int = 0,
) -> np.ndarray:
    """A seeded training view: stain transfer toward a random other slide's
    statistics, then a random dihedral transform."""
    own = stain_stats[tile.slide_id]
    rng = np.random.default_rng(seed)
    others = [rec.slide_id for rec in catalog if rec.slide_id != tile.slide_id]
    target_id = others[int(rng.integers(len(others)))] if others else tile.slide_id

    image = read_tile(catalog, tile)
    transferred = reinhard_transfer(image, own, stain_stats[target_id])
    return dihedral_augment(transferred, int(rng.integers(8)))
