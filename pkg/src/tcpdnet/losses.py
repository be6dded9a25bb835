"""L1 reconstruction losses for the two-step network.

All normalizers use the raw frame's height and width, so each loss is a mean
absolute error over its elements (and over the batch).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch

from . import mosaic
from .errors import InvalidInputError
from .mosaic import DEFAULT_PATTERN, CpfaPattern
from .polar import rgb_to_ycbcr

LOSS_MODES = ("cp", "cp_ycbcr")


@dataclass
class LossBreakdown:
    l_c: float
    l_cp: float
    l_cp_ycbcr: float
    total: float
    alpha: float
    mode: str = "cp_ycbcr"

    def to_dict(self) -> dict:
        return asdict(self)


def _batch_and_size(z: torch.Tensor) -> tuple[int, int, int]:
    if z.ndim not in (3, 4) or z.shape[-3] != 12:
        raise InvalidInputError(f"target must be (N, 12, H, W) or (12, H, W), got {tuple(z.shape)}")
    n = z.shape[0] if z.ndim == 4 else 1
    return n, z.shape[-2], z.shape[-1]


def loss_c(preds, z: torch.Tensor, pattern: CpfaPattern = DEFAULT_PATTERN) -> torch.Tensor:
    """Sub-sampled RGB loss: ``sum_theta |pred_theta - V_theta(z)|_1 / (3 H W)``.

    ``preds`` is a ``(..., 4, 3, H/2, W/2)`` stack or a sequence of four
    ``(..., 3, H/2, W/2)`` images in angle order.
    """
    if isinstance(preds, (list, tuple)):
        preds = torch.stack(list(preds), dim=-4)
    n, h, w = _batch_and_size(z)
    target = mosaic.extract_subsampled_rgb_all(z, pattern)
    if preds.shape != target.shape:
        raise InvalidInputError(f"prediction shape {tuple(preds.shape)} does not match {tuple(target.shape)}")
    return (preds - target).abs().sum() / (3 * h * w * n)


def loss_cp(pred: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Full color-polarization loss in RGB: ``sum |pred - z|_1 / (12 H W)``."""
    n, h, w = _batch_and_size(z)
    if pred.shape != z.shape:
        raise InvalidInputError(f"prediction shape {tuple(pred.shape)} does not match {tuple(z.shape)}")
    return (pred - z).abs().sum() / (12 * h * w * n)


def loss_cp_ycbcr(pred: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Same as ``loss_cp`` after converting every RGB triple to YCbCr."""
    n, h, w = _batch_and_size(z)
    if pred.shape != z.shape:
        raise InvalidInputError(f"prediction shape {tuple(pred.shape)} does not match {tuple(z.shape)}")
    return (rgb_to_ycbcr(pred) - rgb_to_ycbcr(z)).abs().sum() / (12 * h * w * n)


def total_loss(l_c, l_cp_term, alpha: float = 4.0):
    return l_c + alpha * l_cp_term


def compute_losses(prediction, z: torch.Tensor, pattern: CpfaPattern, alpha: float = 4.0, mode: str = "cp_ycbcr"):
    """Total loss tensor plus a detached ``LossBreakdown``.

    ``prediction`` is a ``nets.Prediction``. Models without a sub-sampled
    output (the single-step net) get ``l_c = 0``.
    """
    if mode not in LOSS_MODES:
        raise ValueError(f"loss mode must be one of {LOSS_MODES}, got {mode!r}")
    cube, sub = prediction
    lc = loss_c(sub, z, pattern) if sub is not None else cube.new_zeros(())
    lcp = loss_cp(cube, z)
    lcpy = loss_cp_ycbcr(cube, z)
    total = total_loss(lc, lcpy if mode == "cp_ycbcr" else lcp, alpha)
    lc_v, lcp_v, lcpy_v, total_v = (float(t.detach()) for t in (lc, lcp, lcpy, total))
    breakdown = LossBreakdown(l_c=lc_v, l_cp=lcp_v, l_cp_ycbcr=lcpy_v, total=total_v, alpha=alpha, mode=mode)
    return total, breakdown
