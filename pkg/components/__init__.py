"""
Curvelight Components Package

This package implements zero-reference low-light image enhancement: a
small convolutional network estimates pixel-wise curve parameters, and an
iterated quadratic curve maps every pixel of the input into a brighter,
range-preserving output. Training needs no paired or reference images;
four non-reference losses supply the signal.

Core Components:
- Tensor / Tape / backward: numpy tensors with reverse-mode differentiation
- functional: convolutions, activations, pooling and bilinear resizing
- curves: Light-Enhancement curve steps, per-iteration and shared maps
- NetworkFactory / DCENet: plain and depthwise separable curve networks
- checkpoint: little-endian binary model files
- losses: spatial consistency, exposure control, color constancy, smoothness
- Adam: bias-corrected optimizer
- trainer: dataset loading, training loop, validation
- metrics: PSNR, SSIM, MAE and directory reports
- image_io: PNG / PPM decoding and encoding
- TrainingAnalyzer: training logs, ablation tables, loss plots
- gradcheck: finite-difference verification of every backward rule

Key Features:
- plain (24 per-iteration maps) and dsc (3 shared maps, 12x downsampling) networks
- l-f-n structural ablation grid
- Deterministic single-threaded mode for reproducible runs
"""

from .analyzer import TrainingAnalyzer
from .checkpoint import (
    CheckpointError,
    CheckpointLayoutError,
    CheckpointVersionError,
    NotACheckpointError,
    TruncatedCheckpointError,
)
from .curves import (
    CurveParamMaps,
    CurveRangeError,
    apply_curve_maps,
    apply_curves,
    apply_curves_shared,
    curve_partials,
    le_step,
)
from .gradcheck import grad_check, run_gradient_suite
from .image_io import CorruptImageError, ImageIOError, UnsupportedFormatError
from .logger import Logger
from .losses import LossConfig, loss_terms, total_loss
from .metrics import MetricReport, mae, psnr, ssim
from .network import DCENet, NetworkFactory, Variant, build, enhance, estimate_curves, flops, param_count
from .optimizer import Adam, AdamState, adam_step
from .tensor import ShapeError, Tape, Tensor, backward
from .trainer import EmptyDatasetError, NonFiniteLossError, TrainConfig, train, validate

__all__ = [
    'Adam',
    'AdamState',
    'CheckpointError',
    'CheckpointLayoutError',
    'CheckpointVersionError',
    'CorruptImageError',
    'CurveParamMaps',
    'CurveRangeError',
    'DCENet',
    'EmptyDatasetError',
    'ImageIOError',
    'Logger',
    'LossConfig',
    'MetricReport',
    'NetworkFactory',
    'NonFiniteLossError',
    'NotACheckpointError',
    'ShapeError',
    'Tape',
    'Tensor',
    'TrainConfig',
    'TrainingAnalyzer',
    'TruncatedCheckpointError',
    'UnsupportedFormatError',
    'Variant',
    'adam_step',
    'apply_curve_maps',
    'apply_curves',
    'apply_curves_shared',
    'backward',
    'build',
    'curve_partials',
    'enhance',
    'estimate_curves',
    'flops',
    'grad_check',
    'le_step',
    'loss_terms',
    'mae',
    'param_count',
    'psnr',
    'run_gradient_suite',
    'ssim',
    'total_loss',
    'train',
    'validate',
]
