"""Slide inventory: manifest parsing, group assignment, tissue masking, tiling.

Slides are plain 8-bit RGB images listed in a JSON-Lines manifest; every
slide is treated as already resampled to the 0.5 mpp reference scale.
"""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import color
from .errors import ConfigError, DataError, ManifestError

TILE_SIZE = 256

STAIN_CATEGORIES = ("HE", "IHC", "OTHER")
PREP_KINDS = ("FFPE", "FF")

_REQUIRED_FIELDS = (
    "slide_id",
    "case_id",
    "lab",
    "tissue_type",
    "staining",
    "staining_category",
    "scanner",
    "prep",
    "mpp",
    "image_path",
)


@dataclass(frozen=True)
class SlideRecord:
    slide_id: str
    case_id: str
    lab: str
    tissue_type: str
    staining: str
    staining_category: str
    scanner: str
    prep: str
    mpp: float
    image_path: str
    diagnosis: str | None = None
    group_id: int = -1
    extra: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class TileRef:
    """Fixed-size tile origin in pixel coordinates at the reference scale."""

    slide_id: str
    x: int
    y: int
    size: int = TILE_SIZE


class Catalog:
    """Immutable, ordered collection of slide records."""

    def __init__(self, records: list[SlideRecord], base_dir: str | Path = "."):
        self.records = list(records)
        self.base_dir = Path(base_dir)
        self._by_id = {}
        for rec in self.records:
            if rec.slide_id in self._by_id:
                raise ManifestError(f"duplicate slide_id {rec.slide_id!r}")
            self._by_id[rec.slide_id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, slide_id: str) -> bool:
        return slide_id in self._by_id

    def get(self, slide_id: str) -> SlideRecord:
        try:
            return self._by_id[slide_id]
        except KeyError:
            raise DataError(f"unknown slide_id {slide_id!r}")

    def index_of(self, slide_id: str) -> int:
        rec = self.get(slide_id)
        return self.records.index(rec)

    def image_file(self, slide_id: str) -> Path:
        rec = self.get(slide_id)
        p = Path(rec.image_path)
        return p if p.is_absolute() else self.base_dir / p


def _record_from_obj(obj: dict, line_no: int) -> SlideRecord:
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise ManifestError(f"line {line_no}: missing field {name}")
    known = set(_REQUIRED_FIELDS) | {"diagnosis", "group_id"}
    extra = {k: v for k, v in obj.items() if k not in known}

    mpp = obj["mpp"]
    if not isinstance(mpp, (int, float)) or not math.isfinite(mpp) or mpp <= 0:
        raise ManifestError(f"line {line_no}: mpp must be a positive number, got {mpp!r}")
    category = obj["staining_category"]
    if category not in STAIN_CATEGORIES:
        raise ManifestError(
            f"line {line_no}: staining_category must be one of {STAIN_CATEGORIES}, got {category!r}"
        )
    prep = obj["prep"]
    if prep not in PREP_KINDS:
        raise ManifestError(f"line {line_no}: prep must be one of {PREP_KINDS}, got {prep!r}")

    return SlideRecord(
        slide_id=str(obj["slide_id"]),
        case_id=str(obj["case_id"]),
        lab=str(obj["lab"]),
        tissue_type=str(obj["tissue_type"]),
        staining=str(obj["staining"]),
        staining_category=category,
        scanner=str(obj["scanner"]),
        prep=prep,
        mpp=float(mpp),
        image_path=str(obj["image_path"]),
        diagnosis=obj.get("diagnosis"),
        group_id=int(obj.get("group_id", -1)),
        extra=extra,
    )


def load_manifest(path: str | Path) -> Catalog:
    """Parse a JSON-Lines manifest into a Catalog, preserving order."""
    path = Path(path)
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {line_no}: invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise ManifestError(f"line {line_no}: expected a JSON object")
            rec = _record_from_obj(obj, line_no)
            if rec.slide_id in seen:
                raise ManifestError(f"line {line_no}: duplicate slide_id {rec.slide_id!r}")
            seen.add(rec.slide_id)
            records.append(rec)
    return Catalog(records, base_dir=path.parent)


def save_manifest(catalog: Catalog, path: str | Path) -> None:
    """Serialize a Catalog back to JSON-Lines, keeping unknown fields.

    Relative image paths are re-anchored to the new manifest's directory so
    they keep resolving to the same files.
    """
    import os

    path = Path(path)

    def anchored(image_path: str) -> str:
        p = Path(image_path)
        if p.is_absolute():
            return image_path
        resolved = (catalog.base_dir / p).resolve()
        try:
            rel = os.path.relpath(resolved, path.parent.resolve())
        except ValueError:  # different drive on windows
            return str(resolved)
        return rel if not rel.startswith("..") else str(resolved)

    with open(path, "w", encoding="utf-8") as fh:
        for rec in catalog:
            obj = {
                "slide_id": rec.slide_id,
                "case_id": rec.case_id,
                "lab": rec.lab,
                "tissue_type": rec.tissue_type,
                "staining": rec.staining,
                "staining_category": rec.staining_category,
                "scanner": rec.scanner,
                "prep": rec.prep,
                "diagnosis": rec.diagnosis,
                "mpp": rec.mpp,
                "image_path": anchored(rec.image_path),
                "group_id": rec.group_id,
            }
            obj.update(rec.extra)
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# --- slide grouping -------------------------------------------------------

_RULE_KEYS = ("lab", "tissue_type", "staining_category", "diagnosis")


@dataclass
class GroupRuleSet:
    """Ordered first-match-wins predicates mapping slide metadata to groups."""

    rules: list[tuple[dict, int]]
    default_group: int

    def __post_init__(self):
        ids = sorted({g for _, g in self.rules} | {self.default_group})
        if ids != list(range(len(ids))):
            raise ConfigError(f"group ids must be dense starting at 0, got {ids}")
        for match, _ in self.rules:
            bad = set(match) - set(_RULE_KEYS)
            if bad:
                raise ConfigError(f"unknown rule keys {sorted(bad)}; allowed: {_RULE_KEYS}")

    @property
    def group_count(self) -> int:
        return max([g for _, g in self.rules] + [self.default_group]) + 1

    def group_for(self, rec: SlideRecord) -> int:
        for match, group in self.rules:
            if all(getattr(rec, key) == value for key, value in match.items()):
                return group
        return self.default_group


def load_group_rules(path: str | Path) -> GroupRuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "default" not in doc:
        raise ConfigError(f"{path}: expected a mapping with a 'default' group")
    rules = []
    for i, entry in enumerate(doc.get("rules", [])):
        if not isinstance(entry, dict) or "group" not in entry or "match" not in entry:
            raise ConfigError(f"{path}: rule {i} must have 'group' and 'match' keys")
        rules.append((dict(entry["match"]), int(entry["group"])))
    return GroupRuleSet(rules, int(doc["default"]))


def assign_groups(catalog: Catalog, rules: GroupRuleSet) -> Catalog:
    """Return a catalog with every record's group_id set by the rule set."""
    records = [replace(rec, group_id=rules.group_for(rec)) for rec in catalog]
    return Catalog(records, base_dir=catalog.base_dir)


# --- tissue detection and tiling ------------------------------------------


class TissueMask:
    """Boolean tissue grid at a fixed downsample of the slide image."""

    def __init__(self, grid: np.ndarray, downsample: int):
        self.grid = np.asarray(grid, dtype=bool)
        self.downsample = int(downsample)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def tissue_fraction(self, x: int, y: int, size: int) -> float:
        ds = self.downsample
        gx0, gy0 = x // ds, y // ds
        gx1 = math.ceil((x + size) / ds)
        gy1 = math.ceil((y + size) / ds)
        cells = self.grid[gy0:gy1, gx0:gx1]
        if cells.size == 0:
            return 0.0
        return float(cells.mean())


def _block_mean(image: np.ndarray, block: int) -> np.ndarray:
    h, w = image.shape[:2]
    row_idx = np.arange(0, h, block)
    col_idx = np.arange(0, w, block)
    summed = np.add.reduceat(np.add.reduceat(image.astype(np.float64), row_idx, axis=0), col_idx, axis=1)
    row_sizes = np.minimum(row_idx + block, h) - row_idx
    col_sizes = np.minimum(col_idx + block, w) - col_idx
    counts = row_sizes[:, None] * col_sizes[None, :]
    return summed / counts[..., None]


def compute_tissue_mask(
    image: np.ndarray,
    s_min: float = 0.05,
    v_max: float = 0.95,
    downsample: int = 16,
) -> TissueMask:
    """Mark tissue where HSV saturation >= s_min and value <= v_max.

    Evaluated on the block-mean color of each downsample x downsample cell.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"expected an RGB image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DataError("zero-area image")
    means = _block_mean(arr, downsample)
    hsv = color.rgb_to_hsv(means)
    grid = (hsv[..., 1] >= s_min) & (hsv[..., 2] <= v_max)
    return TissueMask(grid, downsample)


def slide_dimensions(catalog: Catalog, slide_id: str) -> tuple[int, int]:
    """(width, height) of the slide image, read from the file header."""
    path = catalog.image_file(slide_id)
    try:
        with Image.open(path) as im:
            return im.size
    except FileNotFoundError:
        raise IOError(f"slide {slide_id!r}: image file not found: {path}")


def enumerate_tiles(
    slide: SlideRecord,
    mask: TissueMask,
    size: int = TILE_SIZE,
    stride: int | None = None,
    min_tissue: float = 0.25,
    slide_dims: tuple[int, int] | None = None,
) -> list[TileRef]:
    """Row-major grid of fully-inside tiles with tissue fraction >= min_tissue.

    Partial edge tiles are dropped. slide_dims (width, height) is read from
    the slide's image header when not given; if the file is unreachable the
    mask extent is used, which can overshoot the true edge by up to
    downsample - 1 pixels.
    """
    stride = size if stride is None else stride
    if slide_dims is None:
        p = Path(slide.image_path)
        if p.is_file():
            with Image.open(p) as im:
                width, height = im.size
        else:
            h, w = mask.shape
            width, height = w * mask.downsample, h * mask.downsample
    else:
        width, height = slide_dims
    tiles = []
    for y in range(0, height - size + 1, stride):
        for x in range(0, width - size + 1, stride):
            if mask.tissue_fraction(x, y, size) >= min_tissue:
                tiles.append(TileRef(slide.slide_id, x, y, size))
    return tiles


# --- pixel access ----------------------------------------------------------

_IMAGE_CACHE: OrderedDict[str, np.ndarray] = OrderedDict()
_IMAGE_CACHE_MAX = 8
_IMAGE_CACHE_LOCK = threading.Lock()


def load_slide_image(catalog: Catalog, slide_id: str) -> np.ndarray:
    """Full slide image as a read-only uint8 RGB array (small LRU cache)."""
    path = str(catalog.image_file(slide_id))
    with _IMAGE_CACHE_LOCK:
        if path in _IMAGE_CACHE:
            _IMAGE_CACHE.move_to_end(path)
            return _IMAGE_CACHE[path]
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except FileNotFoundError:
        raise IOError(f"slide {slide_id!r}: image file not found: {path}")
    arr.setflags(write=False)
    with _IMAGE_CACHE_LOCK:
        _IMAGE_CACHE[path] = arr
        while len(_IMAGE_CACHE) > _IMAGE_CACHE_MAX:
            _IMAGE_CACHE.popitem(last=False)
    return arr


def read_tile(catalog: Catalog, tile: TileRef) -> np.ndarray:
    """Exact pixel crop of a tile; the tile must lie fully inside the slide."""
    arr = load_slide_image(catalog, tile.slide_id)
    h, w = arr.shape[:2]
    if tile.x < 0 or tile.y < 0 or tile.x + tile.size > w or tile.y + tile.size > h:
        raise DataError(
            f"tile ({tile.x},{tile.y}) size {tile.size} outside slide {tile.slide_id!r} ({w}x{h})"
        )
    return np.array(arr[tile.y : tile.y + tile.size, tile.x : tile.x + tile.size], copy=True)
