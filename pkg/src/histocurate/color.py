"""Color-space conversions used by the feature extractor and stain transfer.

All conversions take 8-bit RGB arrays of shape (..., 3) and return float64
arrays of the same shape. Definitions:

* LAB  -- CIELAB under the D65 white point, L in [0, 100].
* HSV  -- hue normalized to [0, 1), S and V in [0, 1].
* LALPHABETA -- the decorrelated log space of Reinhard-style color
  transfer: RGB -> LMS cone response -> log10 -> opponent rotation.
"""

from __future__ import annotations

import numpy as np

# sRGB -> XYZ under D65. White point taken as the row sums so that pure
# white maps exactly to L=100, a=b=0.
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = _RGB2XYZ.sum(axis=1)

# RGB -> LMS cone responses (Ruderman et al. daylight spectra).
_RGB2LMS = np.array(
    [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ]
)
# The rounded published inverse loses ~2/255 on a round trip; the exact
# inverse is used instead.
_LMS2RGB = np.linalg.inv(_RGB2LMS)

# log-LMS -> lalphabeta opponent rotation.
_LOGLMS2LAB = np.diag([1.0 / np.sqrt(3), 1.0 / np.sqrt(6), 1.0 / np.sqrt(2)]) @ np.array(
    [[1.0, 1.0, 1.0], [1.0, 1.0, -2.0], [1.0, -1.0, 0.0]]
)
_LAB2LOGLMS = np.linalg.inv(_LOGLMS2LAB)

_LMS_FLOOR = 1e-6  # keeps log10 finite for black pixels

SPACES = ("RGB", "LAB", "HSV", "HED")


def _as_unit_rgb(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected RGB array with last dim 3, got shape {arr.shape}")
    return arr / 255.0


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """8-bit RGB -> CIELAB (D65)."""
    rgb = _as_unit_rgb(image)
    xyz = srgb_to_linear(rgb) @ _RGB2XYZ.T
    t = xyz / _WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    """CIELAB -> 8-bit-range RGB floats (not rounded, clipped to [0, 255])."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    delta = 6.0 / 29.0
    t = np.where(f > delta, f**3, 3 * delta**2 * (f - 4.0 / 29.0))
    xyz = t * _WHITE
    rgb = linear_to_srgb(xyz @ _XYZ2RGB.T)
    return np.clip(rgb * 255.0, 0.0, 255.0)


def rgb_to_hsv(image: np.ndarray) -> np.ndarray:
    """8-bit RGB -> HSV with all channels in [0, 1) / [0, 1]."""
    rgb = _as_unit_rgb(image)
    v = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    c = v - mn
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe_c = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    is_r = (v == r) & (c > 0)
    is_g = (v == g) & (c > 0) & ~is_r
    is_b = (c > 0) & ~is_r & ~is_g
    h = np.where(is_r, ((g - b) / safe_c) % 6.0, h)
    h = np.where(is_g, (b - r) / safe_c + 2.0, h)
    h = np.where(is_b, (r - g) / safe_c + 4.0, h)
    h = h / 6.0
    h = np.where(h >= 1.0, h - 1.0, h)
    return np.stack([h, s, v], axis=-1)


def rgb_to_lalphabeta(image: np.ndarray) -> np.ndarray:
    """8-bit RGB -> decorrelated log lalphabeta."""
    rgb = _as_unit_rgb(image)
    lms = np.maximum(rgb @ _RGB2LMS.T, _LMS_FLOOR)
    return np.log10(lms) @ _LOGLMS2LAB.T


def lalphabeta_to_rgb(lab: np.ndarray) -> np.ndarray:
    """lalphabeta -> 8-bit-range RGB floats, clipped to [0, 255]."""
    lab = np.asarray(lab, dtype=np.float64)
    lms = 10.0 ** (lab @ _LAB2LOGLMS.T)
    rgb = lms @ _LMS2RGB.T
    return np.clip(rgb * 255.0, 0.0, 255.0)


_CONVERTERS = {
    "LAB": rgb_to_lab,
    "HSV": rgb_to_hsv,
    "LALPHABETA": rgb_to_lalphabeta,
}


def convert_color(image: np.ndarray, space: str) -> np.ndarray:
    """Convert an 8-bit RGB image to the named real-valued space."""
    try:
        fn = _CONVERTERS[space.upper()]
    except KeyError:
        raise ValueError(f"unknown color space {space!r}; expected one of {sorted(_CONVERTERS)}")
    return fn(image)
