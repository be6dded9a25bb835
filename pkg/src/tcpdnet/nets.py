"""Demosaicking networks.

Every network follows the same recipe: bilinear initialization followed by a
U-Net whose output is added back onto the initialization. The final 1x1
projection starts at zero, so an untrained network is exactly its bilinear
stage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from . import interp, mosaic
from .mosaic import DEFAULT_PATTERN, CpfaPattern

_ACTIVATIONS = {
    "relu": nn.ReLU,
    "leaky_relu": lambda: nn.LeakyReLU(0.2),
    "elu": nn.ELU,
    "softplus": nn.Softplus,
}


@dataclass(frozen=True)
class ArchitectureSpec:
    levels: int = 3
    base_channels: int = 32
    kernel_size: int = 3
    activation: str = "relu"
    residual: bool = True
    convs_per_level: int = 2

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if self.base_channels < 1 or self.convs_per_level < 1:
            raise ValueError("base_channels and convs_per_level must be positive")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; choose from {sorted(_ACTIVATIONS)}")

    @property
    def multiple(self) -> int:
        return 2**self.levels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(**d)


def single_step_arch(arch: ArchitectureSpec) -> ArchitectureSpec:
    """Width for the single-step net so its parameter budget matches both two-step nets."""
    return replace(arch, base_channels=max(1, round(arch.base_channels * math.sqrt(2))))


def _conv_block(cin: int, cout: int, arch: ArchitectureSpec) -> nn.Sequential:
    layers = []
    for k in range(arch.convs_per_level):
        layers += [
            nn.Conv2d(cin if k == 0 else cout, cout, arch.kernel_size, padding=arch.kernel_size // 2),
            _ACTIVATIONS[arch.activation](),
        ]
    return nn.Sequential(*layers)


class UNet(nn.Module):
    """Encoder-decoder with concatenated skips and a zero-initialized 1x1 head.

    Max-pool down, nearest-neighbor upsample + conv up, widths doubling per level.
    Inputs of any size are reflect-padded to a multiple of ``2**levels`` and cropped back.
    """

    def __init__(self, in_channels: int, out_channels: int, arch: ArchitectureSpec):
        super().__init__()
        self.arch = arch
        w = arch.base_channels
        widths = [w * 2**lvl for lvl in range(arch.levels + 1)]
        self.down = nn.ModuleList(
            _conv_block(in_channels if lvl == 0 else widths[lvl - 1], widths[lvl], arch) for lvl in range(arch.levels)
        )
        self.bottom = _conv_block(widths[arch.levels - 1], widths[arch.levels], arch)
        pad = arch.kernel_size // 2
        self.up = nn.ModuleList(
            nn.Conv2d(widths[lvl + 1], widths[lvl], arch.kernel_size, padding=pad) for lvl in range(arch.levels)
        )
        self.decode = nn.ModuleList(_conv_block(2 * widths[lvl], widths[lvl], arch) for lvl in range(arch.levels))
        self.head = nn.Conv2d(w, out_channels, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        m = self.arch.multiple
        ph, pw = (-h) % m, (-w) % m
        if ph or pw:
            # reflection needs the pad to be shorter than the edge
            mode = "reflect" if ph < h and pw < w else "replicate"
            x = F.pad(x, (0, pw, 0, ph), mode=mode)
        skips = []
        y = x
        for block in self.down:
            y = block(y)
            skips.append(y)
            y = F.max_pool2d(y, 2)
        y = self.bottom(y)
        for lvl in reversed(range(self.arch.levels)):
            y = self.up[lvl](F.interpolate(y, scale_factor=2, mode="nearest"))
            y = self.decode[lvl](torch.cat([skips[lvl], y], dim=1))
        y = self.head(y)
        if self.arch.residual:
            y = x + y
        return y[..., :h, :w]


class ColorDemosaicker(nn.Module):
    """Sub-sampled Bayer mosaic ``(N, h, w)`` -> refined RGB ``(N, 3, h, w)``."""

    def __init__(self, arch: ArchitectureSpec, pattern: CpfaPattern = DEFAULT_PATTERN):
        super().__init__()
        self.pattern = pattern
        self.refine = UNet(3, 3, arch)

    def forward(self, m: torch.Tensor) -> torch.Tensor:
        return self.refine(interp._bayer_bilinear(m, self.pattern))


class PolarizationDemosaicker(nn.Module):
    """Polarization mosaic ``(N, H, W)`` -> refined orientation planes ``(N, 4, H, W)``."""

    def __init__(self, arch: ArchitectureSpec, pattern: CpfaPattern = DEFAULT_PATTERN):
        super().__init__()
        self.pattern = pattern
        self.refine = UNet(4, 4, arch)

    def forward(self, m: torch.Tensor) -> torch.Tensor:
        return self.refine(interp._polarization_bilinear(m, self.pattern))


class Prediction(NamedTuple):
    cube: torch.Tensor  # (N, 12, H, W)
    subsampled: Optional[torch.Tensor]  # (N, 4, 3, H/2, W/2) for the two-step net, else None


class TCPDNet(nn.Module):
    """Two-step network: shared color demosaicker, then shared polarization demosaicker."""

    kind = "tcpdnet"

    def __init__(self, arch: ArchitectureSpec = ArchitectureSpec(), pattern: CpfaPattern = DEFAULT_PATTERN):
        super().__init__()
        self.arch = arch
        self.pattern = pattern
        self.color = ColorDemosaicker(arch, pattern)
        self.polar = PolarizationDemosaicker(arch, pattern)

    def forward(self, x: torch.Tensor) -> Prediction:
        n, h, w = x.shape
        # the four orientations go through one network as one batch
        sub = mosaic.subsample_all(x, self.pattern).reshape(n * 4, h // 2, w // 2)
        y = self.color(sub).reshape(n, 4, 3, h // 2, w // 2)
        mosaics = mosaic.assemble_all(y, self.pattern).reshape(n * 3, h, w)
        quads = self.polar(mosaics).reshape(n, 3, 4, h, w)
        cube = quads.transpose(1, 2).reshape(n, 12, h, w)
        return Prediction(cube, y)


class SingleStepNet(nn.Module):
    """Ablation baseline: one U-Net refining the 12-channel two-step bilinear cube."""

    kind = "single_step"

    def __init__(self, arch: ArchitectureSpec = ArchitectureSpec(), pattern: CpfaPattern = DEFAULT_PATTERN):
        super().__init__()
        self.arch = arch
        self.pattern = pattern
        self.refine = UNet(12, 12, single_step_arch(arch))

    def forward(self, x: torch.Tensor) -> Prediction:
        with torch.no_grad():
            init = interp.two_step_bilinear(x, self.pattern)[0]
        return Prediction(self.refine(init), None)


MODELS = {TCPDNet.kind: TCPDNet, SingleStepNet.kind: SingleStepNet}


def build_model(kind: str, arch: ArchitectureSpec, pattern: CpfaPattern = DEFAULT_PATTERN) -> nn.Module:
    try:
        return MODELS[kind](arch, pattern)
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {sorted(MODELS)}") from None


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


# Functional views of the pipeline stages.


def color_demosaick(m: torch.Tensor, net: ColorDemosaicker) -> torch.Tensor:
    return net(m)


def polarization_demosaick(m: torch.Tensor, net: PolarizationDemosaicker) -> torch.Tensor:
    return net(m)


def tcpdnet_forward(x: torch.Tensor, net: TCPDNet) -> torch.Tensor:
    return net(x).cube


def single_step_forward(x: torch.Tensor, net: SingleStepNet) -> torch.Tensor:
    return net(x).cube


@torch.no_grad()
def demosaick_image(net: nn.Module, raw, clamp: bool = True) -> torch.Tensor:
    """Inference on one full-size raw frame ``(H, W)``; returns a ``(12, H, W)`` float64 tensor."""
    was_training = net.training
    net.eval()
    param = next(net.parameters())
    x = torch.as_tensor(raw, dtype=param.dtype, device=param.device)[None]
    out = net(x).cube[0].to(torch.float64)
    net.train(was_training)
    return out.clamp(0.0, 1.0) if clamp else out
