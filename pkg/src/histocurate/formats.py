"""Binary artifact formats: feature dumps, cluster models, embedding stores.

All integers are little-endian. Each format opens with a 4-byte magic and a
u32 version. Layouts:

* feature dump  "RVFV": u32 version, u32 dim, u64 count, then per row
  u32 slide_index, u32 x, u32 y, dim x f32.
* cluster model "RVCM": u32 version, u32 k, u32 dim, k*dim f32 centroids
  (row-major), f64 inertia.
* embedding store "RVES": u32 version, u32 dim, u32 slide_count, then per
  slide: u16 id length + UTF-8 id, u16 diagnosis length + UTF-8 diagnosis,
  u32 tile_count, tile_count x (u32 x, u32 y), tile_count*dim f32 row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

FEATURES_MAGIC = b"RVFV"
CLUSTER_MAGIC = b"RVCM"
STORE_MAGIC = b"RVES"
FORMAT_VERSION = 1


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated file while reading {what}")
    return data


def _check_magic(fh, expected: bytes, path) -> None:
    magic = fh.read(4)
    if magic != expected:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {expected!r}")
    (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")


@dataclass
class FeatureDump:
    """Per-tile feature rows; slide_index refers to catalog record order."""

    slide_indices: np.ndarray  # (N,) uint32
    coords: np.ndarray  # (N, 2) uint32, columns (x, y)
    features: np.ndarray  # (N, dim) float32

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


def _row_dtype(dim: int) -> np.dtype:
    return np.dtype([("slide", "<u4"), ("x", "<u4"), ("y", "<u4"), ("feat", "<f4", (dim,))])


def write_feature_dump(path: str | Path, dump: FeatureDump) -> None:
    n, dim = dump.features.shape
    rows = np.empty(n, dtype=_row_dtype(dim))
    rows["slide"] = dump.slide_indices
    rows["x"] = dump.coords[:, 0]
    rows["y"] = dump.coords[:, 1]
    rows["feat"] = dump.features
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, dim, n))
        rows.tofile(fh)


def read_feature_dump(path: str | Path) -> FeatureDump:
    with open(path, "rb") as fh:
        _check_magic(fh, FEATURES_MAGIC, path)
        dim, count = struct.unpack("<IQ", _read_exact(fh, 12, path, "header"))
        rows = np.fromfile(fh, dtype=_row_dtype(dim), count=count)
        if rows.shape[0] != count:
            raise FormatError(f"{path}: truncated file, expected {count} rows")
    coords = np.stack([rows["x"], rows["y"]], axis=1).astype(np.uint32)
    return FeatureDump(rows["slide"].copy(), coords, rows["feat"].astype(np.float32))


def write_cluster_model(path: str | Path, centroids: np.ndarray, inertia: float) -> None:
    centroids = np.ascontiguousarray(centroids, dtype="<f4")
    k, dim = centroids.shape
    with open(path, "wb") as fh:
        fh.write(CLUSTER_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, k, dim))
        centroids.tofile(fh)
        fh.write(struct.pack("<d", float(inertia)))


def read_cluster_model(path: str | Path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        _check_magic(fh, CLUSTER_MAGIC, path)
        k, dim = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        flat = np.fromfile(fh, dtype="<f4", count=k * dim)
        if flat.size != k * dim:
            raise FormatError(f"{path}: truncated centroid block")
        (inertia,) = struct.unpack("<d", _read_exact(fh, 8, path, "inertia"))
    return flat.reshape(k, dim).astype(np.float64), inertia


def _write_str(fh, text: str, path) -> None:
    data = text.encode("utf-8")
    if len(data) > 0xFFFF:
        raise FormatError(f"{path}: string too long for u16 length prefix")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def _read_str(fh, path, what: str) -> str:
    (length,) = struct.unpack("<H", _read_exact(fh, 2, path, what))
    return _read_exact(fh, length, path, what).decode("utf-8")


def write_embedding_store(path: str | Path, dim: int, slides) -> None:
    """slides: iterable of (slide_id, diagnosis, coords (T,2) uint32, vectors (T,dim) f32)."""
    slides = list(slides)
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, dim, len(slides)))
        for slide_id, diagnosis, coords, vectors in slides:
            coords = np.ascontiguousarray(coords, dtype="<u4")
            vectors = np.ascontiguousarray(vectors, dtype="<f4")
            if vectors.shape != (coords.shape[0], dim):
                raise FormatError(
                    f"{path}: slide {slide_id!r} has vectors {vectors.shape}, "
                    f"expected ({coords.shape[0]}, {dim})"
                )
            _write_str(fh, slide_id, path)
            _write_str(fh, diagnosis or "", path)
            fh.write(struct.pack("<I", coords.shape[0]))
            coords.tofile(fh)
            vectors.tofile(fh)


def read_embedding_store(path: str | Path):
    """Returns (dim, [(slide_id, diagnosis, coords, vectors), ...])."""
    slides = []
    with open(path, "rb") as fh:
        _check_magic(fh, STORE_MAGIC, path)
        dim, slide_count = struct.unpack("<II", _read_exact(fh, 8, path, "header"))
        for _ in range(slide_count):
            slide_id = _read_str(fh, path, "slide id")
            diagnosis = _read_str(fh, path, "diagnosis") or None
            (tile_count,) = struct.unpack("<I", _read_exact(fh, 4, path, "tile count"))
            coords = np.fromfile(fh, dtype="<u4", count=tile_count * 2)
            vectors = np.fromfile(fh, dtype="<f4", count=tile_count * dim)
            if coords.size != tile_count * 2 or vectors.size != tile_count * dim:
                raise FormatError(f"{path}: truncated slide block for {slide_id!r}")
            slides.append(
                (
                    slide_id,
                    diagnosis,
                    coords.reshape(tile_count, 2).astype(np.uint32),
                    vectors.reshape(tile_count, dim).astype(np.float32),
                )
            )
    return dim, slides
