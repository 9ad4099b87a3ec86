"""Optical-density stain deconvolution and per-patch color statistics.

The 36-entry feature vector is (mean, std, median) of each channel in the
four spaces RGB, LAB, HSV, HED, in that fixed order. HED channels come from
Beer-Lambert deconvolution with a hematoxylin/eosin/DAB matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import color
from .errors import DataError

FEATURE_DIM = 36

# Default H/E/DAB optical-density vectors (rows), unit-normalized on
# construction. Overridable wherever a StainMatrix is accepted.
_DEFAULT_HED_ROWS = np.array(
    [
        [0.65, 0.70, 0.29],  # hematoxylin
        [0.07, 0.99, 0.11],  # eosin
        [0.27, 0.57, 0.78],  # DAB
    ]
)

_MAX_CONDITION = 1e6


class StainMatrix:
    """3x3 matrix of unit-norm stain optical-density row vectors."""

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape != (3, 3):
            raise ValueError(f"stain matrix must be 3x3, got {rows.shape}")
        norms = np.linalg.norm(rows, axis=1)
        if np.any(norms == 0):
            raise ValueError("stain matrix has a zero row")
        self.rows = rows / norms[:, None]
        if np.linalg.cond(self.rows) >= _MAX_CONDITION:
            raise ValueError("stain matrix is singular or near-singular")
        self.inverse = np.linalg.inv(self.rows)


DEFAULT_STAIN_MATRIX = StainMatrix(_DEFAULT_HED_ROWS)


def stain_deconvolve(
    image: np.ndarray,
    matrix: StainMatrix = DEFAULT_STAIN_MATRIX,
    i0: float = 255.0,
    eps: float = 1.0,
) -> np.ndarray:
    """RGB -> per-stain concentration channels via Beer-Lambert inversion.

    Per pixel: OD_c = -log10((I_c + eps) / (i0 + eps)), concentrations =
    OD @ M^-1. Output is not clipped; concentrations can be negative.
    """
    arr = np.asarray(image, dtype=np.float64)
    od = -np.log10((arr + eps) / (i0 + eps))
    return od @ matrix.inverse


def _exact_median(values: np.ndarray, lo: float, hi: float, bins: int) -> float:
    """Exact median located through a histogram pass.

    The histogram narrows the search to the bin(s) holding the middle order
    statistics; only those values are sorted. Values outside [lo, hi) fall
    into the end bins, which keeps the result exact regardless of range.
    """
    v = values.ravel()
    n = v.size
    if n == 0:
        raise ValueError("median of empty array")
    k1 = (n - 1) // 2
    k2 = n // 2

    scale = bins / (hi - lo)
    idx = np.clip(((v - lo) * scale).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    cum = np.cumsum(counts)
    b1 = int(np.searchsorted(cum, k1 + 1))
    b2 = int(np.searchsorted(cum, k2 + 1))

    in_bins = v[(idx >= b1) & (idx <= b2)]
    in_bins.sort()
    offset = int(cum[b1 - 1]) if b1 > 0 else 0
    return 0.5 * (in_bins[k1 - offset] + in_bins[k2 - offset])


# (lo, hi, bins) per space; RGB uses one bin per 8-bit level, real-valued
# spaces use 1024 uniform bins.
_MEDIAN_BINS = {
    "RGB": ((0.0, 256.0, 256),) * 3,
    "LAB": ((0.0, 100.0, 1024), (-128.0, 128.0, 1024), (-128.0, 128.0, 1024)),
    "HSV": ((0.0, 1.0, 1024),) * 3,
    "HED": ((-4.0, 5.0, 1024),) * 3,
}


def feature_names() -> list[str]:
    names = []
    for space, channels in (
        ("rgb", "rgb"),
        ("lab", ("l", "a", "b")),
        ("hsv", "hsv"),
        ("hed", ("h", "e", "d")),
    ):
        for ch in channels:
            for stat in ("mean", "std", "median"):
                names.append(f"{space}_{ch}_{stat}")
    return names


def features_36(image: np.ndarray, matrix: StainMatrix = DEFAULT_STAIN_MATRIX) -> np.ndarray:
    """36 color statistics of an 8-bit RGB patch.

    Order: for each space (RGB, LAB, HSV, HED), for each of its 3 channels,
    (mean, std, median). Deterministic for a given patch.
    """
    arr = np.asarray(image, dtype=np.float64)
    planes = {
        "RGB": arr,
        "LAB": color.rgb_to_lab(arr),
        "HSV": color.rgb_to_hsv(arr),
        "HED": stain_deconvolve(arr, matrix),
    }
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    i = 0
    for space in ("RGB", "LAB", "HSV", "HED"):
        data = planes[space]
        for ch in range(3):
            values = data[..., ch]
            lo, hi, bins = _MEDIAN_BINS[space][ch]
            out[i] = values.mean()
            out[i + 1] = values.std()
            out[i + 2] = _exact_median(values, lo, hi, bins)
            i += 3
    return out


@dataclass
class StainStats:
    """Per-slide channel statistics in the stain-transfer color space."""

    slide_id: str
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)
    patch_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(3)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(3)
        if np.any(self.std < 0):
            raise ValueError("negative channel std")
        if self.patch_count < 1:
            raise ValueError("patch_count must be >= 1")


def image_transfer_stats(image: np.ndarray, slide_id: str = "") -> StainStats:
    """Channel mean/std of a single image in the transfer (lalphabeta) space."""
    x = color.rgb_to_lalphabeta(image).reshape(-1, 3)
    return StainStats(slide_id, x.mean(axis=0), x.std(axis=0), 1)


def slide_stain_stats(catalog, slide_id: str, tiles, max_tiles: int = 500, seed: int = 0) -> StainStats:
    """Pooled lalphabeta channel stats over a seeded subsample of tiles."""
    from .catalog import read_tile  # local import avoids a cycle

    if not tiles:
        raise DataError(f"no tissue tiles for slide {slide_id!r}")
    rng = np.random.default_rng(seed)
    count = min(max_tiles, len(tiles))
    chosen = rng.choice(len(tiles), size=count, replace=False)

    n = 0
    total = np.zeros(3)
    total_sq = np.zeros(3)
    for i in sorted(int(j) for j in chosen):
        x = color.rgb_to_lalphabeta(read_tile(catalog, tiles[i])).reshape(-1, 3)
        n += x.shape[0]
        total += x.sum(axis=0)
        total_sq += (x * x).sum(axis=0)
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    return StainStats(slide_id, mean, np.sqrt(var), count)
