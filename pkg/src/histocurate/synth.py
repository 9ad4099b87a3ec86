"""Synthetic slide corpus with known ground truth.

Each diagnosis gets a distinct color palette and blob/stripe texture, each
lab a small global color shift, and non-H&E staining categories a stronger
tint. Diagnosis signatures dominate the color statistics, so retrieval and
clustering on the generated corpus have verifiable targets.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

MARGIN = 32  # white border kept free of tissue


@dataclass
class SynthSpec:
    slides: int = 40
    diagnoses: int = 5
    size: int = 1024
    labs: int = 3
    tissues: int = 2
    variety: bool = False  # cycle labs/tissues/stains over 31 fixed profiles
    seed: int = 0


def _hsv255(h: float, s: float, v: float) -> np.ndarray:
    return np.array(colorsys.hsv_to_rgb(h % 1.0, s, v)) * 255.0


def _palette(d: int, total: int) -> dict:
    hue = d / max(total, 1)
    return {
        "base": _hsv255(hue, 0.30 + 0.05 * (d % 2), 0.82),
        "accent": _hsv255(hue + 0.10, 0.65, 0.50),
        "radius": 6 + 4 * (d % 4),
        "blobs_per_mpx": 80 + 40 * (d % 3),
        "stripe_amp": 6.0 * (d % 2),
        "stripe_period": 32 + 16 * d,
    }


_CATEGORY_TINT = {
    "HE": None,
    "IHC": np.array([150.0, 115.0, 85.0]),
    "OTHER": np.array([120.0, 130.0, 170.0]),
}

# 31 fixed metadata profiles for the variety corpus: enough distinct
# (lab, tissue, staining-category) combinations to exercise a 31-way
# grouping config.
_VARIETY_PROFILES = [
    (f"lab_{lab}", f"tissue_{tissue}", category)
    for category in ("HE", "IHC", "OTHER")
    for lab in range(4)
    for tissue in range(3)
][:31]

_STAIN_NAME = {"HE": "H&E", "IHC": "PD-L1", "OTHER": "Giemsa"}
_SCANNERS = ("scanner_A", "scanner_B", "scanner_C")


def _render_slide(spec: SynthSpec, idx: int, palette: dict, lab_shift: np.ndarray, tint) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 101, idx]))
    size = spec.size
    img = np.full((size, size, 3), 250.0)
    img += rng.normal(0.0, 1.5, img.shape)

    m = MARGIN
    base = palette["base"] + lab_shift
    tissue = np.empty((size - 2 * m, size - 2 * m, 3))
    tissue[:] = base
    tissue += rng.normal(0.0, 5.0, tissue.shape)
    if palette["stripe_amp"] > 0:
        ys = np.arange(tissue.shape[0])
        stripes = palette["stripe_amp"] * np.sin(2 * np.pi * ys / palette["stripe_period"])
        tissue += stripes[:, None, None]

    accent = palette["accent"] + lab_shift
    n_blobs = int(palette["blobs_per_mpx"] * (size - 2 * m) ** 2 / 1_000_000) + 1
    r = palette["radius"]
    span = tissue.shape[0]
    centers = rng.integers(r, span - r, size=(n_blobs, 2))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    disk = (yy * yy + xx * xx) <= r * r
    for cy, cx in centers:
        window = tissue[cy - r : cy + r + 1, cx - r : cx + r + 1]
        window[disk] = 0.2 * window[disk] + 0.8 * accent

    if tint is not None:
        tissue = 0.6 * tissue + 0.4 * tint

    img[m : size - m, m : size - m] = tissue
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _metadata(spec: SynthSpec, idx: int) -> tuple[str, str, str]:
    if spec.variety:
        return _VARIETY_PROFILES[idx % len(_VARIETY_PROFILES)]
    return (f"lab_{idx % spec.labs}", f"tissue_{(idx // spec.labs) % spec.tissues}", "HE")


def _group_rules(spec: SynthSpec) -> dict:
    if spec.variety:
        rules = [
            {"group": i + 1, "match": {"lab": lab, "tissue_type": tissue, "staining_category": cat}}
            for i, (lab, tissue, cat) in enumerate(_VARIETY_PROFILES[:-1])
        ]
        return {"default": 0, "rules": rules}
    rules = [{"group": lab, "match": {"lab": f"lab_{lab}"}} for lab in range(1, spec.labs)]
    return {"default": 0, "rules": rules}


def generate_corpus(out_dir: str | Path, spec: SynthSpec, clusters: int = 10, metas: int = 3) -> Path:
    """Write images, manifest, and example configs; returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    palettes = [_palette(d, spec.diagnoses) for d in range(spec.diagnoses)]
    lab_count = 4 if spec.variety else spec.labs
    shift_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 202]))
    lab_shifts = {f"lab_{j}": shift_rng.integers(-6, 7, 3).astype(np.float64) for j in range(lab_count)}

    manifest_path = out / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for i in range(spec.slides):
            lab, tissue_type, category = _metadata(spec, i)
            d = i % spec.diagnoses
            image = _render_slide(spec, i, palettes[d], lab_shifts[lab], _CATEGORY_TINT[category])
            rel = f"images/slide_{i:03d}.png"
            Image.fromarray(image).save(out / rel)
            record = {
                "slide_id": f"slide_{i:03d}",
                "case_id": f"case_{i // 2:03d}",
                "lab": lab,
                "tissue_type": tissue_type,
                "staining": _STAIN_NAME[category],
                "staining_category": category,
                "scanner": _SCANNERS[i % len(_SCANNERS)],
                "prep": "FFPE" if i % 2 == 0 else "FF",
                "diagnosis": f"diag_{d}",
                "mpp": 0.5,
                "image_path": rel,
                "group_id": -1,
            }
            fh.write(json.dumps(record) + "\n")

    with open(out / "groups.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(_group_rules(spec), fh, sort_keys=False)

    merge = {
        "clusters": {i: i % metas for i in range(clusters)},
        "metas": {
            m: {"weight": 1.0, "description": f"synthetic meta-cluster {m}"} for m in range(metas)
        },
    }
    with open(out / "mergemap.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(merge, fh, sort_keys=False)

    group_count = 31 if spec.variety else spec.labs
    weights = {
        "groups": {g: 1.0 for g in range(group_count)},
        "metas": {m: 1.0 for m in range(metas)},
    }
    with open(out / "weights.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(weights, fh, sort_keys=False)

    roi = {"slide_id": "slide_000", "tiles": [{"x": 0, "y": 0}, {"x": 256, "y": 0}]}
    with open(out / "roi_example.json", "w", encoding="utf-8") as fh:
        json.dump(roi, fh, indent=2)

    return manifest_path
