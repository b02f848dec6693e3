"""
Light-Enhancement curves.

A single step maps every pixel value I of every RGB channel to
I + a*I*(1-I) with a per-pixel parameter a in [-1, 1]. The mapping keeps
[0, 1] inside [0, 1], is non-decreasing in I, and fixes 0 and 1. Higher
order curves iterate the step, either with a fresh map per iteration or
with one shared map reused at every iteration.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from . import settings
from .functional import concat_channels, resize_bilinear
from .logger import Logger
from .tensor import ShapeError, Tensor, record

RGB = 3

_range_checks = settings.debug_enabled()


class CurveRangeError(ValueError):
    """Raised in debug mode when an image or curve map leaves its valid range."""


def set_range_checks(enabled: bool) -> bool:
    """Enable or disable debug range checks; returns the previous setting."""
    global _range_checks
    previous = _range_checks
    _range_checks = bool(enabled)
    return previous


def _check_range(values: np.ndarray, low: float, high: float, what: str) -> None:
    if values.size and (values.min() < low or values.max() > high):
        message = f"{what} outside [{low}, {high}]: min={values.min()}, max={values.max()}"
        Logger.error(message, name=__name__)
        raise CurveRangeError(message)


@dataclass(frozen=True)
class CurveParamMaps:
    """
    Per-pixel, per-channel curve parameters.

    `maps` is (N, 3*n, H, W) with map group k in channels [3k, 3k+3) when
    unshared, or (N, 3, H, W) reused for all n iterations when shared.
    """
    maps: Tensor
    iterations: int
    shared: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.maps.ndim != 4:
            raise ShapeError(f"curve maps must be (N, C, H, W), got {self.maps.shape}")
        expected = RGB if self.shared else RGB * self.iterations
        if self.maps.shape[1] != expected:
            kind = "shared" if self.shared else "per-iteration"
            Logger.error(
                f"{kind} curve maps for n={self.iterations} need {expected} channels, got {self.maps.shape[1]}",
                name=__name__,
            )
            raise ShapeError(
                f"{kind} curve maps for n={self.iterations} need {expected} channels, got {self.maps.shape[1]}"
            )
        if _range_checks:
            _check_range(self.maps.data, -1.0, 1.0, "curve parameters")

    @property
    def groups(self) -> int:
        """Number of distinct RGB map groups (1 when shared)."""
        return 1 if self.shared else self.iterations

    @property
    def spatial_size(self) -> Tuple[int, int]:
        return self.maps.shape[2], self.maps.shape[3]

    def group(self, k: int) -> Tensor:
        """RGB maps used at iteration k (0-based)."""
        if not 0 <= k < self.iterations:
            raise IndexError(f"iteration {k} out of range for n={self.iterations}")
        if self.shared:
            return self.maps
        return self.maps[:, RGB * k:RGB * (k + 1)]

    def tiled(self) -> "CurveParamMaps":
        """Unshared copy with the shared map repeated for every iteration."""
        if not self.shared:
            return self
        if self.iterations == 1:
            return CurveParamMaps(self.maps, 1, shared=False)
        return CurveParamMaps(concat_channels(*([self.maps] * self.iterations)), self.iterations, shared=False)

    def resized(self, height: int, width: int) -> "CurveParamMaps":
        if (height, width) == self.spatial_size:
            return self
        return CurveParamMaps(resize_bilinear(self.maps, height, width), self.iterations, self.shared)


def curve_partials(img: Union[Tensor, np.ndarray], alpha: Union[Tensor, np.ndarray]):
    """
    Partial derivatives of one curve step.

    Returns:
        tuple: (d_out/d_img, d_out/d_alpha) = (1 + alpha*(1 - 2*img), img*(1 - img))
    """
    x = np.asarray(getattr(img, "data", img))
    a = np.asarray(getattr(alpha, "data", alpha))
    return 1.0 + a * (1.0 - 2.0 * x), x * (1.0 - x)


def le_step(img: Tensor, alpha: Tensor) -> Tensor:
    """One quadratic curve step: img + alpha*img*(1-img), per pixel and channel."""
    if img.shape != alpha.shape:
        Logger.error(f"le_step: image {img.shape} and curve map {alpha.shape} differ", name=__name__)
        raise ShapeError(f"le_step: image {img.shape} and curve map {alpha.shape} differ")
    if _range_checks:
        _check_range(img.data, 0.0, 1.0, "image")
        _check_range(alpha.data, -1.0, 1.0, "curve parameters")

    x, a = img.data, alpha.data
    # this association keeps the result inside [0, 1] under rounding
    out = x + a * (x * (1.0 - x))

    def backward_fn(g):
        d_img, d_alpha = curve_partials(x, a)
        return g * d_img, g * d_alpha

    return record("le_step", (img, alpha), Tensor(out), backward_fn)


def apply_curves(img: Tensor, maps: Union[CurveParamMaps, Tensor], iterations: int = None) -> Tensor:
    """
    Iterate the curve with a fresh RGB map per iteration.

    Args:
        img: (N, 3, H, W) in [0, 1]
        maps: per-iteration maps (N, 3*n, H, W), or a CurveParamMaps with shared=False
        iterations: n, required when `maps` is a bare Tensor
    """
    if not isinstance(maps, CurveParamMaps):
        maps = CurveParamMaps(maps, iterations if iterations is not None else maps.shape[1] // RGB, shared=False)
    if maps.shared:
        raise ValueError("apply_curves needs per-iteration maps; use apply_curves_shared for a shared map")
    if iterations is not None and iterations != maps.iterations:
        raise ValueError(f"iterations={iterations} does not match maps built for n={maps.iterations}")

    out = img
    for k in range(maps.iterations):
        out = le_step(out, maps.group(k))
    return out


def apply_curves_shared(img: Tensor, maps: Union[CurveParamMaps, Tensor], iterations: int = None) -> Tensor:
    """
    Iterate the curve reusing one RGB map at every iteration.

    Reuse makes the map's gradient the sum over all iterations.
    """
    if not isinstance(maps, CurveParamMaps):
        if iterations is None:
            raise ValueError("apply_curves_shared needs the iteration count")
        maps = CurveParamMaps(maps, iterations, shared=True)
    if not maps.shared:
        raise ValueError("apply_curves_shared needs a shared 3-channel map")

    out = img
    for _ in range(maps.iterations):
        out = le_step(out, maps.maps)
    return out


def apply_curve_maps(img: Tensor, maps: CurveParamMaps) -> Tensor:
    """Apply shared or per-iteration maps, whichever `maps` holds."""
    if maps.shared:
        return apply_curves_shared(img, maps)
    return apply_curves(img, maps)
