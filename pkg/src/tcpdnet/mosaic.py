"""CPFA pattern, raw synthesis and the sample re-arrangement operators.

The sensor tiles a 4x4 pattern: each 2x2 block holds the four polarizer
orientations and the blocks themselves follow a Bayer color layout. All
operators here are pure relabelings of sample positions and work on numpy
arrays as well as torch tensors (gradients flow through them).

Shapes (leading batch dimensions are allowed everywhere):

==============================  ========================
raw CPFA frame                  ``(..., H, W)``
full color-polarization cube    ``(..., 12, H, W)``
sub-sampled Bayer mosaic        ``(..., H/2, W/2)``
sub-sampled RGB image           ``(..., 3, H/2, W/2)``
mosaicked polarization plane    ``(..., H, W)``
intensity quad                  ``(..., 4, H, W)``
==============================  ========================
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import torch

from .errors import InvalidInputError
from .polar import ANGLES, COLORS

_BAYER_LAYOUTS = ("RGGB", "BGGR", "GRBG", "GBRG")


def _stack(arrays, axis):
    if isinstance(arrays[0], torch.Tensor):
        return torch.stack(list(arrays), dim=axis)
    return np.stack(arrays, axis=axis)


def _swap_orientation_color(a):
    """``(..., 4, 3, h, w) <-> (..., 3, 4, h, w)``."""
    if isinstance(a, torch.Tensor):
        return a.transpose(-4, -3)
    return np.swapaxes(a, -4, -3)


@dataclass(frozen=True)
class CpfaPattern:
    """4x4 color-polarization filter layout.

    ``polarization`` gives the orientation (degrees) at each position of a
    2x2 block, row-major. ``bayer`` names the colors of the 2x2 arrangement of
    blocks. The default is the Sony-style layout: ``[[90, 45], [135, 0]]``
    inside RGGB-colored blocks.
    """

    polarization: tuple[tuple[int, int], tuple[int, int]] = ((90, 45), (135, 0))
    bayer: str = "RGGB"
    _offsets: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        pol = tuple(tuple(int(a) for a in row) for row in self.polarization)
        if len(pol) != 2 or any(len(row) != 2 for row in pol):
            raise InvalidInputError(f"polarization block must be 2x2, got {self.polarization}")
        if sorted(a for row in pol for a in row) != list(ANGLES):
            raise InvalidInputError(f"polarization block must hold 0, 45, 90, 135 once each, got {pol}")
        bayer = self.bayer.upper()
        if bayer not in _BAYER_LAYOUTS:
            raise InvalidInputError(f"unsupported Bayer layout {self.bayer!r}; use one of {_BAYER_LAYOUTS}")
        object.__setattr__(self, "polarization", pol)
        object.__setattr__(self, "bayer", bayer)
        offsets = {pol[r][c]: (r, c) for r in range(2) for c in range(2)}
        object.__setattr__(self, "_offsets", offsets)

    def offset(self, angle: int) -> tuple[int, int]:
        """(row, col) of ``angle`` inside every 2x2 block."""
        try:
            return self._offsets[int(angle)]
        except KeyError:
            raise InvalidInputError(f"orientation must be one of {ANGLES}, got {angle}") from None

    def block_color(self, a: int, b: int) -> int:
        """Color index (0=R, 1=G, 2=B) of block ``(a, b)`` in the half-resolution grid."""
        return COLORS.index(self.bayer[2 * (a % 2) + (b % 2)])

    def orientation_at(self, i: int, j: int) -> int:
        return self.polarization[i % 2][j % 2]

    def color_at(self, i: int, j: int) -> int:
        return self.block_color(i // 2, j // 2)

    def channel_map(self) -> np.ndarray:
        """4x4 table of cube channel indices ``3 * orientation_index + color``."""
        table = np.empty((4, 4), dtype=np.int64)
        for i in range(4):
            for j in range(4):
                table[i, j] = 3 * ANGLES.index(self.orientation_at(i, j)) + self.color_at(i, j)
        return table

    def layout(self) -> list[list[tuple[str, int]]]:
        """Human-readable 4x4 grid of ``(color, orientation)``."""
        return [[(COLORS[self.color_at(i, j)], self.orientation_at(i, j)) for j in range(4)] for i in range(4)]

    def to_dict(self) -> dict:
        return {"polarization": [list(r) for r in self.polarization], "bayer": self.bayer}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CpfaPattern":
        return cls(polarization=tuple(tuple(r) for r in d["polarization"]), bayer=d["bayer"])

    @classmethod
    def parse(cls, text: str) -> "CpfaPattern":
        """Parse ``"90,45,135,0:RGGB"`` (block orientations row-major, then Bayer layout)."""
        try:
            angles, bayer = text.split(":")
            a = [int(v) for v in angles.split(",")]
            return cls(polarization=((a[0], a[1]), (a[2], a[3])), bayer=bayer)
        except (ValueError, IndexError):
            raise InvalidInputError(f"cannot parse pattern {text!r}; expected e.g. '90,45,135,0:RGGB'") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __str__(self):
        return ",".join(str(a) for row in self.polarization for a in row) + ":" + self.bayer


DEFAULT_PATTERN = CpfaPattern()


def _check_cube(z) -> None:
    if z.ndim < 3 or z.shape[-3] != 12:
        raise InvalidInputError(f"cube must have shape (..., 12, H, W), got {tuple(z.shape)}")
    h, w = z.shape[-2:]
    if h % 4 or w % 4:
        raise InvalidInputError(f"height and width must be multiples of 4, got {h}x{w}")


def _check_plane(x) -> None:
    if x.ndim < 2:
        raise InvalidInputError(f"raw frame must have at least 2 dimensions, got {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h % 4 or w % 4:
        raise InvalidInputError(f"height and width must be multiples of 4, got {h}x{w}")


def synthesize_cpfa(z, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Sample a 12-channel cube through the CPFA: one channel per pixel."""
    _check_cube(z)
    table = pattern.channel_map()
    if isinstance(z, torch.Tensor):
        raw = z.new_empty(z.shape[:-3] + z.shape[-2:])
    else:
        raw = np.empty(z.shape[:-3] + z.shape[-2:], dtype=z.dtype)
    for i in range(4):
        for j in range(4):
            raw[..., i::4, j::4] = z[..., table[i, j], i::4, j::4]
    return raw


def subsample_orientation(x, angle: int, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Gather the ``angle`` pixel of every 2x2 block: a half-size Bayer mosaic."""
    _check_plane(x)
    r, c = pattern.offset(angle)
    return x[..., r::2, c::2]


def subsample_all(x, pattern: CpfaPattern = DEFAULT_PATTERN):
    """All four sub-sampled Bayer mosaics stacked as ``(..., 4, H/2, W/2)`` in angle order."""
    return _stack([subsample_orientation(x, a, pattern) for a in ANGLES], -3)


def extract_subsampled_rgb(z, angle: int, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Orientation ``angle``'s RGB at the positions ``subsample_orientation`` reads."""
    _check_cube(z)
    r, c = pattern.offset(angle)
    o = ANGLES.index(angle)
    return z[..., 3 * o : 3 * o + 3, r::2, c::2]


def extract_subsampled_rgb_all(z, pattern: CpfaPattern = DEFAULT_PATTERN):
    """``(..., 4, 3, H/2, W/2)`` stack of ``extract_subsampled_rgb`` over all angles."""
    return _stack([extract_subsampled_rgb(z, a, pattern) for a in ANGLES], -4)


def interleave_orientations(planes, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Pixel-shuffle ``(..., 4, h, w)`` (angle order) into a ``(..., 2h, 2w)`` mosaic."""
    if planes.shape[-3] != 4:
        raise InvalidInputError(f"expected 4 orientation planes on axis -3, got {tuple(planes.shape)}")
    slot = [[planes[..., ANGLES.index(pattern.polarization[r][c]), :, :] for c in range(2)] for r in range(2)]
    rows = [_stack(slot[r], -1) for r in range(2)]  # (..., h, w, 2)
    out = _stack(rows, -3)  # (..., h, 2, w, 2)
    h, w = planes.shape[-2:]
    return out.reshape(tuple(planes.shape[:-3]) + (2 * h, 2 * w))


def assemble_mosaicked_polarization(rgbs, color: int | str, pattern: CpfaPattern = DEFAULT_PATTERN):
    """Interleave channel ``color`` of four sub-sampled RGB images into one polarization mosaic.

    ``rgbs`` is either a mapping ``angle -> (..., 3, h, w)`` or a sequence of
    four such images in ``(0, 45, 90, 135)`` order.
    """
    c = COLORS.index(color) if isinstance(color, str) else int(color)
    if isinstance(rgbs, Mapping):
        missing = [a for a in ANGLES if a not in rgbs]
        if missing:
            raise InvalidInputError(f"missing sub-sampled RGB image for orientation(s) {missing}")
        rgbs = [rgbs[a] for a in ANGLES]
    if len(rgbs) != 4:
        raise InvalidInputError(f"need one sub-sampled RGB image per orientation, got {len(rgbs)}")
    shapes = {tuple(r.shape) for r in rgbs}
    if len(shapes) != 1:
        raise InvalidInputError(f"sub-sampled RGB images differ in shape: {sorted(shapes)}")
    return interleave_orientations(_stack([r[..., c, :, :] for r in rgbs], -3), pattern)


def assemble_all(y, pattern: CpfaPattern = DEFAULT_PATTERN):
    """``(..., 4, 3, h, w)`` sub-sampled RGB stack -> ``(..., 3, 2h, 2w)`` per-color mosaics."""
    return interleave_orientations(_swap_orientation_color(y), pattern)


def extract_channel(z, color: int | str):
    """The four full-resolution orientation planes of one color, ``(..., 4, H, W)``."""
    _check_cube(z)
    c = COLORS.index(color) if isinstance(color, str) else int(color)
    return z[..., c::3, :, :]


def concat_channels(r, g, b):
    """Inverse of ``extract_channel``: three quads -> ``(..., 12, H, W)``."""
    shapes = {tuple(q.shape) for q in (r, g, b)}
    if len(shapes) != 1:
        raise InvalidInputError(f"color quads differ in shape: {sorted(shapes)}")
    if r.ndim < 3 or r.shape[-3] != 4:
        raise InvalidInputError(f"quads must have shape (..., 4, H, W), got {tuple(r.shape)}")
    cube = _stack([r, g, b], -3)  # (..., 4, 3, H, W)
    return cube.reshape(tuple(r.shape[:-3]) + (12,) + tuple(r.shape[-2:]))


def orientation_masks(pattern: CpfaPattern, h: int, w: int) -> np.ndarray:
    """``(4, h, w)`` 0/1 masks of where each orientation is sampled in a polarization mosaic."""
    m = np.zeros((4, h, w))
    for k, a in enumerate(ANGLES):
        r, c = pattern.offset(a)
        m[k, r::2, c::2] = 1.0
    return m


def bayer_masks(pattern: CpfaPattern, h: int, w: int) -> np.ndarray:
    """``(3, h, w)`` 0/1 color masks of a sub-sampled Bayer mosaic."""
    m = np.zeros((3, h, w))
    for a in range(2):
        for b in range(2):
            m[pattern.block_color(a, b), a::2, b::2] = 1.0
    return m


def random_crop_offsets(rng: np.random.Generator, h: int, w: int, size: int, count: int) -> list[tuple[int, int]]:
    """Random ``size`` x ``size`` crop corners aligned to the 4-pixel CPFA period."""
    if size % 4 or size > h or size > w:
        raise InvalidInputError(f"crop size {size} must be a multiple of 4 not exceeding {h}x{w}")
    ys = rng.integers(0, (h - size) // 4 + 1, size=count) * 4
    xs = rng.integers(0, (w - size) // 4 + 1, size=count) * 4
    return [(int(y), int(x)) for y, x in zip(ys, xs)]
