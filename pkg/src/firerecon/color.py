"""sRGB / CIELab conversions and the Euclidean Lab pixel distance.

All functions operate on arrays whose last axis holds the three channels, so
single colours and whole images share one code path.
"""

from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)

_PRIMARIES_XY = np.array([[0.64, 0.33], [0.30, 0.60], [0.15, 0.06]])
_WHITE_XY = np.array([0.3127, 0.3290])


def _rgb_to_xyz_matrix() -> np.ndarray:
    xy = _PRIMARIES_XY
    xyz = np.column_stack([xy[:, 0] / xy[:, 1], np.ones(3), (1 - xy[:, 0] - xy[:, 1]) / xy[:, 1]]).T
    w = _WHITE_XY
    white = np.array([w[0] / w[1], 1.0, (1 - w[0] - w[1]) / w[1]])
    return xyz * np.linalg.solve(xyz, white)


#: Linear sRGB -> CIE XYZ (D65), columns are the primaries.
RGB_TO_XYZ = _rgb_to_xyz_matrix()
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
#: XYZ of linear RGB (1, 1, 1); the Lab reference white.
D65_WHITE = RGB_TO_XYZ.sum(axis=1)

_EPS = (6.0 / 29.0) ** 3
_KAPPA = (29.0 / 6.0) ** 2 / 3.0

_clamp_events = 0


def apply_matrix(m: np.ndarray, v) -> np.ndarray:
    """``v @ m.T`` written out per component so every row is computed identically
    regardless of how many rows are processed together."""
    v = np.asarray(v, dtype=np.float64)
    r, g, b = v[..., 0], v[..., 1], v[..., 2]
    return np.stack([m[i, 0] * r + m[i, 1] * g + m[i, 2] * b for i in range(3)], axis=-1)


def clamp_events() -> int:
    """Number of colours clamped into [0, 1] by :func:`rgb_to_lab` so far."""
    return _clamp_events


def reset_clamp_events() -> None:
    global _clamp_events
    _clamp_events = 0


def srgb_encode(linear):
    """sRGB transfer function for linear values in [0, 1]."""
    linear = np.asarray(linear, dtype=np.float64)
    return np.where(
        linear <= 0.0031308,
        12.92 * linear,
        1.055 * np.power(np.maximum(linear, 0.0031308), 1.0 / 2.4) - 0.055,
    )


def srgb_decode(encoded):
    encoded = np.asarray(encoded, dtype=np.float64)
    return np.where(
        encoded <= 0.04045,
        encoded / 12.92,
        np.power((np.maximum(encoded, 0.04045) + 0.055) / 1.055, 2.4),
    )


def _f(t):
    return np.where(t > _EPS, np.cbrt(t), _KAPPA * t + 4.0 / 29.0)


def _f_inv(t):
    return np.where(t > 6.0 / 29.0, t ** 3, (t - 4.0 / 29.0) / _KAPPA)


def xyz_to_lab(xyz):
    xyz = np.asarray(xyz, dtype=np.float64) / D65_WHITE
    fx, fy, fz = _f(xyz[..., 0]), _f(xyz[..., 1]), _f(xyz[..., 2])
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_xyz(lab):
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    return np.stack([_f_inv(fx), _f_inv(fy), _f_inv(fz)], axis=-1) * D65_WHITE


def rgb_to_lab(rgb):
    """Encoded sRGB in [0, 1] to CIELab (D65).

    Out-of-range channels are clamped and counted (see :func:`clamp_events`).
    """
    global _clamp_events
    rgb = np.asarray(rgb, dtype=np.float64)
    bad = (rgb < 0.0) | (rgb > 1.0)
    if bad.any():
        n = int(bad.any(axis=-1).sum()) if rgb.ndim else 1
        _clamp_events += n
        logger.debug("clamped %d out-of-range colours before Lab conversion", n)
        rgb = np.clip(rgb, 0.0, 1.0)
    return xyz_to_lab(apply_matrix(RGB_TO_XYZ, srgb_decode(rgb)))


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab` (no clamping)."""
    return srgb_encode(apply_matrix(XYZ_TO_RGB, lab_to_xyz(lab)))


def lab_distance(c1, c2):
    """Euclidean distance between Lab colours along the last axis."""
    d = np.asarray(c1, dtype=np.float64) - np.asarray(c2, dtype=np.float64)
    return np.sqrt(np.sum(d * d, axis=-1))
