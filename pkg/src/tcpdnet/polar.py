"""Linear polarization algebra, YCbCr conversion and AoP-DoP false color.

Array conventions used throughout the package are channel-first:

* an intensity quad is ``(..., 4, H, W)`` ordered ``[I0, I45, I90, I135]``
* a Stokes image is ``(..., 3, H, W)`` ordered ``[S0, S1, S2]``
* a full color-polarization cube is ``(..., 12, H, W)`` with channel
  ``3 * orientation + color`` (orientation-major, colors ``R, G, B``)

Angles are in degrees.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
from matplotlib.colors import hsv_to_rgb

from .errors import InvalidInputError

ANGLES = (0, 45, 90, 135)
COLORS = ("R", "G", "B")

EPS = 1e-8

# Full-range BT.601 with zero-centred chroma. Rows: Y, Cb, Cr; columns: R, G, B.
_KR, _KG, _KB = 0.299, 0.587, 0.114
YCBCR_MATRIX = np.array(
    [
        [_KR, _KG, _KB],
        [-_KR / 1.772, -_KG / 1.772, (1.0 - _KB) / 1.772],
        [(1.0 - _KR) / 1.402, -_KG / 1.402, -_KB / 1.402],
    ]
)


def _as_quad(q) -> np.ndarray:
    if isinstance(q, (list, tuple)):
        if len(q) != 4:
            raise InvalidInputError(f"expected 4 orientation planes, got {len(q)}")
        shapes = {np.shape(p) for p in q}
        if len(shapes) != 1:
            raise InvalidInputError(f"orientation planes differ in shape: {sorted(shapes)}")
        return np.stack([np.asarray(p, dtype=np.float64) for p in q], axis=-3)
    q = np.asarray(q, dtype=np.float64)
    if q.ndim < 3 or q.shape[-3] != 4:
        raise InvalidInputError(f"intensity quad must have shape (..., 4, H, W), got {q.shape}")
    return q


def compute_stokes(q: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    """Linear Stokes parameters from four oriented intensities.

    ``S0 = (I0 + I45 + I90 + I135) / 2``, ``S1 = I0 - I90``, ``S2 = I45 - I135``.
    Accepts a ``(..., 4, H, W)`` array or a sequence of four equally shaped planes.
    """
    q = _as_quad(q)
    i0, i45, i90, i135 = (q[..., k, :, :] for k in range(4))
    return np.stack([(i0 + i45 + i90 + i135) / 2.0, i0 - i90, i45 - i135], axis=-3)


def stokes_to_intensities(s: np.ndarray) -> np.ndarray:
    """Render the four polarizer intensities ``(S0 + S1 cos 2t + S2 sin 2t) / 2``."""
    s = np.asarray(s, dtype=np.float64)
    t = np.deg2rad(np.array(ANGLES, dtype=np.float64))
    s0, s1, s2 = s[..., 0:1, :, :], s[..., 1:2, :, :], s[..., 2:3, :, :]
    c = np.cos(2 * t)[:, None, None]
    si = np.sin(2 * t)[:, None, None]
    return (s0 + s1 * c + s2 * si) / 2.0


def compute_aop_dop(s: np.ndarray, eps: float = EPS) -> tuple[np.ndarray, np.ndarray]:
    """Angle (degrees, in [0, 180)) and degree (in [0, 1]) of linear polarization.

    Degenerate pixels are pinned: DoP is 0 where ``S0 <= eps`` and AoP is 0
    where ``S1^2 + S2^2 <= eps^2``.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim < 3 or s.shape[-3] != 3:
        raise InvalidInputError(f"Stokes image must have shape (..., 3, H, W), got {s.shape}")
    s0, s1, s2 = s[..., 0, :, :], s[..., 1, :, :], s[..., 2, :, :]
    pol2 = s1 * s1 + s2 * s2
    pol = np.sqrt(pol2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dop = np.where(s0 > eps, np.minimum(1.0, pol / np.where(s0 > eps, s0, 1.0)), 0.0)
    aop = np.mod(np.rad2deg(0.5 * np.arctan2(s2, s1)), 180.0)
    # mod of a tiny negative number rounds to exactly 180
    aop = np.where((pol2 <= eps * eps) | (aop >= 180.0), 0.0, aop)
    return aop, dop


def angle_error(aop_a: np.ndarray, aop_b: np.ndarray) -> float:
    """Mean pi-periodic absolute difference between two AoP maps, in degrees."""
    a = np.asarray(aop_a, dtype=np.float64)
    b = np.asarray(aop_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"AoP maps differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean(angle_difference(a, b)))


def angle_difference(aop_a, aop_b):
    """Pixelwise ``min(|a - b|, 180 - |a - b|)`` with the difference taken mod 180."""
    d = np.mod(np.abs(np.asarray(aop_a, dtype=np.float64) - np.asarray(aop_b, dtype=np.float64)), 180.0)
    return np.minimum(d, 180.0 - d)


def rgb_to_ycbcr(img):
    """Convert every RGB triple of a ``(..., 3k, H, W)`` array to YCbCr.

    Works on numpy arrays and torch tensors (differentiable). For a 12-channel
    cube the conversion is applied to each orientation independently, keeping
    channel layout ``3 * orientation + {Y, Cb, Cr}``.
    """
    if img.ndim < 3 or img.shape[-3] % 3:
        raise InvalidInputError(f"channel count must be a multiple of 3, got shape {tuple(img.shape)}")
    r, g, b = img[..., 0::3, :, :], img[..., 1::3, :, :], img[..., 2::3, :, :]
    y = _KR * r + _KG * g + _KB * b
    cb = (b - y) / 1.772
    cr = (r - y) / 1.402
    if isinstance(img, torch.Tensor):
        out = torch.stack([y, cb, cr], dim=-3)
    else:
        out = np.stack([y, cb, cr], axis=-3)
    # (..., k, 3, H, W) -> (..., 3k, H, W)
    return out.reshape(img.shape)


def visualize_aop_dop(aop: np.ndarray, dop: np.ndarray) -> np.ndarray:
    """HSV false color: hue = AoP / 180, saturation = DoP, value = 1.

    Returns an ``(H, W, 3)`` float image in [0, 1].
    """
    aop = np.asarray(aop, dtype=np.float64)
    dop = np.asarray(dop, dtype=np.float64)
    if aop.shape != dop.shape:
        raise InvalidInputError(f"AoP and DoP maps differ in shape: {aop.shape} vs {dop.shape}")
    hsv = np.stack([np.mod(aop / 180.0, 1.0), np.clip(dop, 0.0, 1.0), np.ones_like(aop)], axis=-1)
    return hsv_to_rgb(hsv)
