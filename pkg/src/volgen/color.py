"""CIE L*a*b* / sRGB conversions (D65 white point).

TFs are authored and interpolated in Lab; compositing happens in linear-light
RGB, and final images are sRGB-encoded. The conversions here are array-valued
and clamp out-of-gamut results into [0, 1].
"""

from __future__ import annotations

import numpy as np

# D65 reference white
_XN, _YN, _ZN = 0.95047, 1.0, 1.08883

_XYZ_TO_RGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])

_RGB_TO_XYZ = np.linalg.inv(_XYZ_TO_RGB)


def _finv(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta, t ** 3, 3 * delta ** 2 * (t - 4.0 / 29.0))


def _f(t: np.ndarray) -> np.ndarray:
    delta = 6.0 / 29.0
    return np.where(t > delta ** 3, np.cbrt(t), t / (3 * delta ** 2) + 4.0 / 29.0)


def lab_to_linear_rgb(lab: np.ndarray) -> np.ndarray:
    """Lab (..., 3) with L in [0,100], a/b in [-110,110] -> linear RGB in [0,1]."""
    lab = np.asarray(lab, dtype=np.float64)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xyz = np.stack([_XN * _finv(fx), _YN * _finv(fy), _ZN * _finv(fz)], axis=-1)
    rgb = xyz @ _XYZ_TO_RGB.T
    return np.clip(rgb, 0.0, 1.0)


def linear_rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    rgb = np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0)
    xyz = rgb @ _RGB_TO_XYZ.T
    fx = _f(xyz[..., 0] / _XN)
    fy = _f(xyz[..., 1] / _YN)
    fz = _f(xyz[..., 2] / _ZN)
    L = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return np.stack([L, a, b], axis=-1)


def linear_to_srgb(c: np.ndarray) -> np.ndarray:
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1 / 2.4) - 0.055)


def srgb_to_linear(c: np.ndarray) -> np.ndarray:
    c = np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
