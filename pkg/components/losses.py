"""
Non-reference losses for zero-reference curve training.

All four losses take the enhanced image (and for the spatial loss the
input image) as (N, 3, H, W) tensors in [0, 1], average over the batch,
and are differentiable through the active Tape. Intensity is the
unweighted mean of the RGB channels.
"""

from dataclasses import asdict, dataclass
from typing import Dict

import numpy as np

from .curves import RGB, CurveParamMaps
from .functional import avg_pool
from .logger import Logger
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class LossConfig:
    """
    Weights and region sizes of the total loss.

    The total is
        spatial_weight*L_spa + exposure_weight*L_exp + color_weight*L_col + smoothness_weight*L_tv
    with defaults (1, 1, 0.5, 20). Setting a weight to 0 removes that loss,
    which is how the loss-contribution ablation is run.
    """
    exposure_level: float = 0.6
    color_weight: float = 0.5
    smoothness_weight: float = 20.0
    spatial_weight: float = 1.0
    exposure_weight: float = 1.0
    spa_region: int = 4
    exp_region: int = 16

    def __post_init__(self):
        if not 0.0 < self.exposure_level < 1.0:
            Logger.error(f"Exposure level E must be in (0, 1), got {self.exposure_level}", name=__name__)
            raise ValueError(f"Exposure level E must be in (0, 1), got {self.exposure_level}")
        for field in ("color_weight", "smoothness_weight", "spatial_weight", "exposure_weight"):
            if getattr(self, field) < 0:
                Logger.error(f"{field} must be >= 0, got {getattr(self, field)}", name=__name__)
                raise ValueError(f"{field} must be >= 0, got {getattr(self, field)}")
        for field in ("spa_region", "exp_region"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1, got {getattr(self, field)}")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class LossTerms:
    """Individual losses of one evaluation plus their weighted total."""
    spatial: Tensor
    exposure: Tensor
    color: Tensor
    smoothness: Tensor
    total: Tensor

    def as_dict(self) -> Dict[str, float]:
        return {
            "L_spa": self.spatial.item(),
            "L_exp": self.exposure.item(),
            "L_col": self.color.item(),
            "L_tv": self.smoothness.item(),
            "total": self.total.item(),
        }


def _require_image(img: Tensor, op: str) -> None:
    if img.ndim != 4 or img.shape[1] != RGB:
        Logger.error(f"{op}: expected an (N, 3, H, W) image batch, got {img.shape}", name=__name__)
        raise ShapeError(f"{op}: expected an (N, 3, H, W) image batch, got {img.shape}")


def _region_intensity(img: Tensor, region: int, op: str) -> Tensor:
    height, width = img.shape[2], img.shape[3]
    if height < region or width < region:
        Logger.error(f"{op}: image {height}x{width} is smaller than one {region}x{region} region", name=__name__)
        raise ShapeError(f"{op}: image {height}x{width} is smaller than one {region}x{region} region")
    return avg_pool(img.mean(axis=1, keepdims=True), region)


def spatial_consistency(input_img: Tensor, enhanced_img: Tensor, region: int = 4) -> Tensor:
    """
    Spatial consistency loss L_spa.

    Compares the contrast between each pooled region and its in-grid
    top/down/left/right neighbours before and after enhancement, then
    averages (|dY| - |dI|)^2 over every ordered (region, neighbour) term.
    Out-of-grid neighbours are skipped, so a 1x1 grid gives 0.
    """
    if input_img.shape != enhanced_img.shape:
        Logger.error(
            f"spatial_consistency: input {input_img.shape} and enhanced {enhanced_img.shape} differ",
            name=__name__,
        )
        raise ShapeError(f"spatial_consistency: input {input_img.shape} and enhanced {enhanced_img.shape} differ")
    _require_image(enhanced_img, "spatial_consistency")

    enhanced = _region_intensity(enhanced_img, region, "spatial_consistency")
    original = _region_intensity(input_img, region, "spatial_consistency")
    batch, _, grid_h, grid_w = enhanced.shape

    # each unordered neighbour pair contributes two identical ordered terms
    pairs = grid_h * (grid_w - 1) + (grid_h - 1) * grid_w
    if pairs == 0:
        return Tensor(0.0)

    total = Tensor(0.0)
    if grid_w > 1:
        d_enh = (enhanced[:, :, :, 1:] - enhanced[:, :, :, :-1]).abs()
        d_org = (original[:, :, :, 1:] - original[:, :, :, :-1]).abs()
        total = total + (d_enh - d_org).square().sum()
    if grid_h > 1:
        d_enh = (enhanced[:, :, 1:, :] - enhanced[:, :, :-1, :]).abs()
        d_org = (original[:, :, 1:, :] - original[:, :, :-1, :]).abs()
        total = total + (d_enh - d_org).square().sum()

    return total / float(pairs * batch)


def exposure_control(enhanced_img: Tensor, exposure_level: float = 0.6, region: int = 16) -> Tensor:
    """Exposure control loss L_exp: mean |Y_k - E| over pooled regions Y_k."""
    _require_image(enhanced_img, "exposure_control")
    intensity = _region_intensity(enhanced_img, region, "exposure_control")
    return (intensity - exposure_level).abs().mean()


def color_constancy(enhanced_img: Tensor) -> Tensor:
    """Color constancy loss L_col: squared gaps between the global channel means, over (R,G), (R,B), (G,B)."""
    _require_image(enhanced_img, "color_constancy")
    means = enhanced_img.mean(axis=(2, 3))
    red, green, blue = means[:, 0], means[:, 1], means[:, 2]
    per_image = (red - green).square() + (red - blue).square() + (green - blue).square()
    return per_image.mean()


def _mean_abs_difference(maps: Tensor, axis: int) -> Tensor:
    """mean |forward difference| per (image, channel); zeros when the extent has a single sample."""
    batch, channels = maps.shape[0], maps.shape[1]
    extent = maps.shape[axis]
    if extent < 2:
        return Tensor(np.zeros((batch, channels)))
    if axis == 3:
        diff = maps[:, :, :, 1:] - maps[:, :, :, :-1]
    else:
        diff = maps[:, :, 1:, :] - maps[:, :, :-1, :]
    return diff.abs().mean(axis=(2, 3))


def illumination_smoothness(maps: CurveParamMaps) -> Tensor:
    """
    Illumination smoothness loss L_tv on the curve parameter maps.

    For every map group and RGB channel, (mean|grad_x| + mean|grad_y|)^2 with
    forward differences; summed over channels and groups, divided by the
    group count. A shared map is one group.
    """
    data = maps.maps
    if data.shape[2] == 1 and data.shape[3] == 1:
        return Tensor(0.0)
    per_channel = (_mean_abs_difference(data, 3) + _mean_abs_difference(data, 2)).square()
    return (per_channel.sum(axis=1) / float(maps.groups)).mean()


def loss_terms(input_img: Tensor, enhanced_img: Tensor, maps: CurveParamMaps, cfg: LossConfig = None) -> LossTerms:
    """Evaluate the four losses and the weighted total."""
    cfg = cfg or LossConfig()
    spatial = spatial_consistency(input_img, enhanced_img, cfg.spa_region)
    exposure = exposure_control(enhanced_img, cfg.exposure_level, cfg.exp_region)
    color = color_constancy(enhanced_img)
    smoothness = illumination_smoothness(maps)

    total = (
        spatial * cfg.spatial_weight
        + exposure * cfg.exposure_weight
        + color * cfg.color_weight
        + smoothness * cfg.smoothness_weight
    )
    return LossTerms(spatial, exposure, color, smoothness, total)


def total_loss(input_img: Tensor, enhanced_img: Tensor, maps: CurveParamMaps, cfg: LossConfig = None) -> Tensor:
    return loss_terms(input_img, enhanced_img, maps, cfg).total
