"""Two-step color-polarization demosaicking (TCPDNet).

Raw color-polarization filter array (CPFA) frames are split into four
half-resolution Bayer mosaics, color-demosaicked by one shared network,
re-interleaved into three per-color polarization mosaics and
polarization-demosaicked by a second shared network.
"""

from .errors import CheckpointError, ConfigError, DataError, InvalidInputError, NumericError
from .evaluation import MetricsRecord, compare_methods, cpsnr, evaluate_dataset, evaluate_scene
from .interp import bayer_bilinear, bilinear_baseline, polarization_bilinear
from .losses import LossBreakdown, loss_c, loss_cp, loss_cp_ycbcr, total_loss
from .mosaic import (
    DEFAULT_PATTERN,
    CpfaPattern,
    assemble_mosaicked_polarization,
    concat_channels,
    extract_channel,
    extract_subsampled_rgb,
    subsample_orientation,
    synthesize_cpfa,
)
from .nets import ArchitectureSpec, SingleStepNet, TCPDNet
from .polar import ANGLES, COLORS, angle_error, compute_aop_dop, compute_stokes, rgb_to_ycbcr, visualize_aop_dop

__version__ = "0.1.0"
