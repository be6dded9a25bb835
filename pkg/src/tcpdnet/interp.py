"""Bilinear interpolation stages.

These serve twice: as the fixed initialization in front of each refinement
CNN, and composed into the standalone bilinear baseline. They are written as
torch convolutions so gradients pass through the polarization stage during
training; numpy inputs are accepted and returned as numpy.
"""

from __future__ import annotations

import functools

import numpy as np
import torch
import torch.nn.functional as F

from . import mosaic
from .mosaic import DEFAULT_PATTERN, CpfaPattern

_CROSS = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]]) / 4.0
_TENT = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]]) / 4.0


def _numpy_in_numpy_out(fn):
    @functools.wraps(fn)
    def wrapper(x, *args, **kwargs):
        if isinstance(x, torch.Tensor):
            return fn(x, *args, **kwargs)
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.floating):
            x = x.astype(np.float64)
        return fn(torch.from_numpy(np.ascontiguousarray(x)), *args, **kwargs).numpy()

    return wrapper


def _masked_conv(x: torch.Tensor, masks: np.ndarray, kernels: list[np.ndarray]) -> torch.Tensor:
    """Zero-fill ``x`` (``(..., h, w)``) per mask and convolve each channel with its stencil.

    Reflection padding maps index -1 to 1 and h to h-2, so the stride-2 sample
    grids stay aligned in the padded frame.
    """
    lead = x.shape[:-2]
    h, w = x.shape[-2:]
    n = len(kernels)
    m = torch.as_tensor(masks, dtype=x.dtype, device=x.device)
    planes = x.reshape(-1, 1, h, w) * m
    planes = F.pad(planes, (1, 1, 1, 1), mode="reflect")
    weight = torch.as_tensor(np.stack(kernels)[:, None], dtype=x.dtype, device=x.device)
    out = F.conv2d(planes, weight, groups=n)
    return out.reshape(tuple(lead) + (n, h, w))


def _bayer_bilinear(m: torch.Tensor, pattern: CpfaPattern) -> torch.Tensor:
    h, w = m.shape[-2:]
    masks = mosaic.bayer_masks(pattern, h, w)
    return _masked_conv(m, masks, [_TENT, _CROSS, _TENT])


def _polarization_bilinear(m: torch.Tensor, pattern: CpfaPattern) -> torch.Tensor:
    h, w = m.shape[-2:]
    masks = mosaic.orientation_masks(pattern, h, w)
    return _masked_conv(m, masks, [_TENT] * 4)


@_numpy_in_numpy_out
def bayer_bilinear(m, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Bilinear demosaicking of a sub-sampled Bayer mosaic ``(..., h, w) -> (..., 3, h, w)``.

    Green uses the 4-neighbor cross, red and blue the 3x3 tent; observed samples pass through.
    """
    return _bayer_bilinear(m, pattern)


@_numpy_in_numpy_out
def polarization_bilinear(m, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Interpolate each orientation of a polarization mosaic: ``(..., H, W) -> (..., 4, H, W)``."""
    return _polarization_bilinear(m, pattern)


def two_step_bilinear(x: torch.Tensor, pattern: CpfaPattern) -> tuple[torch.Tensor, torch.Tensor]:
    """Bilinear two-step pipeline returning ``(cube, subsampled_rgb)``.

    ``subsampled_rgb`` is ``(..., 4, 3, H/2, W/2)``; ``cube`` is ``(..., 12, H, W)``.
    """
    sub = mosaic.subsample_all(x, pattern)
    rgb = _bayer_bilinear(sub, pattern)
    quads = _polarization_bilinear(mosaic.assemble_all(rgb, pattern), pattern)  # (..., 3, 4, H, W)
    cube = quads.transpose(-4, -3).reshape(tuple(x.shape[:-2]) + (12,) + tuple(x.shape[-2:]))
    return cube, rgb


@_numpy_in_numpy_out
def bilinear_baseline(x, pattern: CpfaPattern = DEFAULT_PATTERN):
    """CPFA raw ``(..., H, W)`` -> 12-channel cube by Bayer then polarization bilinear."""
    mosaic._check_plane(x)
    return two_step_bilinear(x, pattern)[0]
