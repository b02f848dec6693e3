"""
Finite-difference verification of the analytic backward rules.
"""

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .curves import CurveParamMaps, apply_curve_maps, apply_curves, apply_curves_shared
from .functional import (
    avg_pool,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    pointwise_conv2d,
    relu,
    resize_bilinear,
    tanh,
)
from .logger import Logger
from .losses import (
    LossConfig,
    color_constancy,
    exposure_control,
    illumination_smoothness,
    spatial_consistency,
    total_loss,
)
from .network import NetworkFactory, estimate_curves
from .tensor import Tape, Tensor, backward, precision

GRADIENT_TOLERANCE = 1e-4

# 8x8 inputs cannot hold a 16x16 exposure region
SUITE_LOSS_CONFIG = LossConfig(spa_region=2, exp_region=4)


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    floor: float = 1e-8,
    kink_tol: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
    analytic_sign: float = 1.0,
) -> float:
    """
    Compare analytic gradients with central differences.

    `fn` takes no arguments and reads the tensors in `params`, whose data is
    perturbed in place one coordinate at a time and restored afterwards.
    The error of a coordinate is |analytic - numeric| / max(|analytic|, |numeric|, floor).

    A coordinate is treated as a kink point and left out when its forward
    and backward one-sided slopes differ by more than kink_tol relative and
    that gap accounts for the whole mismatch (relu at exactly 0, |x| at 0).

    Args:
        fn: Deterministic scalar function of `params`
        params: Tensors to differentiate with respect to
        eps: Central difference step
        floor: Smallest denominator of the relative error
        kink_tol: Relative one-sided slope gap marking a kink
        max_coords: Sample at most this many coordinates per tensor (seeded); all if None
        analytic_sign: Multiplier on the analytic gradient; -1 simulates a broken backward rule

    Returns:
        float: Worst relative error, or nan when every coordinate was excluded
    """
    with Tape() as tape:
        tape.watch(*params)
        loss = fn()
    grads = backward(tape, loss)
    base = loss.item()

    rng = np.random.default_rng(seed)
    worst, compared, skipped = 0.0, 0, 0
    for param in params:
        param.data = np.ascontiguousarray(param.data)
        flat = param.data.reshape(-1)
        analytic_flat = analytic_sign * np.asarray(grads[param]).reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

        for index in coords:
            original = flat[index]
            flat[index] = original + eps
            plus = fn().item()
            flat[index] = original - eps
            minus = fn().item()
            flat[index] = original

            numeric = (plus - minus) / (2.0 * eps)
            analytic = float(analytic_flat[index])
            slope_forward, slope_backward = (plus - base) / eps, (base - minus) / eps
            gap = abs(slope_forward - slope_backward)
            scale = max(abs(slope_forward), abs(slope_backward), floor)
            mismatch = abs(analytic - numeric)
            if gap > kink_tol * scale and mismatch <= gap:
                skipped += 1
                continue

            compared += 1
            worst = max(worst, mismatch / max(abs(analytic), abs(numeric), floor))

    if skipped:
        Logger.debug(f"grad_check excluded {skipped} kink coordinates", name=__name__)
    if compared == 0:
        Logger.warning("grad_check compared no coordinates", name=__name__)
        return float("nan")
    return worst


def _watched(rng: np.random.Generator, shape, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape))


def _parameter(rng: np.random.Generator, shape, std: float = 0.5) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)


def _randomize(model, rng: np.random.Generator) -> None:
    """Replace the 0.02-std initialization with weights large enough to give non-trivial maps."""
    for param in model.parameters():
        if param.ndim == 4:
            fan_in = param.shape[1] * param.shape[2] * param.shape[3]
            param.data = rng.normal(0.0, 0.8 / np.sqrt(fan_in), size=param.shape)
        else:
            param.data = rng.normal(0.0, 0.05, size=param.shape)


def _layer_checks(rng: np.random.Generator) -> Dict[str, tuple]:
    x = _watched(rng, (1, 3, 8, 8))
    weight = _parameter(rng, (4, 3, 3, 3))
    bias = _parameter(rng, (4,))
    dw_weight = _parameter(rng, (3, 1, 3, 3))
    dw_bias = _parameter(rng, (3,))
    pw_weight = _parameter(rng, (5, 3, 1, 1))
    pw_bias = _parameter(rng, (5,))
    other = _watched(rng, (1, 2, 8, 8))

    def probe(shape):
        # fixed random projection so the scalar depends on every output differently
        return Tensor(rng.normal(size=shape))

    r_conv, r_dw, r_pw = probe((1, 4, 8, 8)), probe((1, 3, 8, 8)), probe((1, 5, 8, 8))
    r_pool, r_up, r_down = probe((1, 3, 4, 4)), probe((1, 3, 11, 13)), probe((1, 3, 3, 5))
    r_act, r_cat = probe((1, 3, 8, 8)), probe((1, 5, 8, 8))

    return {
        "conv2d": (lambda: (conv2d(x, weight, bias) * r_conv).sum(), [x, weight, bias]),
        "depthwise_conv2d": (lambda: (depthwise_conv2d(x, dw_weight, dw_bias) * r_dw).sum(), [x, dw_weight, dw_bias]),
        "pointwise_conv2d": (lambda: (pointwise_conv2d(x, pw_weight, pw_bias) * r_pw).sum(), [x, pw_weight, pw_bias]),
        "relu": (lambda: (relu(x) * r_act).sum(), [x]),
        "tanh": (lambda: (tanh(x) * r_act).sum(), [x]),
        "concat_channels": (lambda: (concat_channels(x, other) * r_cat).sum(), [x, other]),
        "avg_pool": (lambda: (avg_pool(x, 2) * r_pool).sum(), [x]),
        "resize_up": (lambda: (resize_bilinear(x, 11, 13) * r_up).sum(), [x]),
        "resize_down": (lambda: (resize_bilinear(x, 3, 5) * r_down).sum(), [x]),
    }


def _curve_checks(rng: np.random.Generator) -> Dict[str, tuple]:
    img = _watched(rng, (1, 3, 8, 8), 0.05, 0.95)
    maps = _watched(rng, (1, 24, 8, 8), -0.9, 0.9)
    shared = _watched(rng, (1, 3, 8, 8), -0.9, 0.9)
    r = Tensor(rng.normal(size=(1, 3, 8, 8)))

    return {
        "apply_curves": (lambda: (apply_curves(img, maps, 8) * r).sum(), [img, maps]),
        "apply_curves_shared": (lambda: (apply_curves_shared(img, shared, 8) * r).sum(), [img, shared]),
    }


def _loss_checks(rng: np.random.Generator) -> Dict[str, tuple]:
    cfg = SUITE_LOSS_CONFIG
    source = Tensor(rng.uniform(0.0, 0.5, size=(1, 3, 8, 8)))
    enhanced = _watched(rng, (1, 3, 8, 8), 0.0, 1.0)
    maps = _watched(rng, (1, 24, 8, 8), -0.9, 0.9)

    return {
        "L_spa": (lambda: spatial_consistency(source, enhanced, cfg.spa_region), [enhanced]),
        "L_exp": (lambda: exposure_control(enhanced, cfg.exposure_level, cfg.exp_region), [enhanced]),
        "L_col": (lambda: color_constancy(enhanced), [enhanced]),
        "L_tv": (lambda: illumination_smoothness(CurveParamMaps(maps, 8)), [maps]),
        "total_loss": (lambda: total_loss(source, enhanced, CurveParamMaps(maps, 8), cfg), [enhanced, maps]),
    }


def _composite_check(variant: str, rng: np.random.Generator, seed: int, downsample: int) -> tuple:
    model = NetworkFactory.create(variant, seed=seed)
    _randomize(model, rng)
    img = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 8, 8)))

    def objective():
        maps = estimate_curves(model, img, downsample)
        return total_loss(img, apply_curve_maps(img, maps), maps, SUITE_LOSS_CONFIG)

    return objective, model.parameters()


def run_gradient_suite(seed: int = 0, corrupt: Optional[str] = None, max_coords: int = 20) -> Dict[str, float]:
    """
    Run every finite-difference check at 64-bit precision.

    Covers each layer operation, both curve recursions, each loss, the total
    loss, and the full objective (network, curves and losses) for the plain
    and dsc networks on 1x3x8x8 inputs.

    Args:
        seed: Seed of the random inputs and coordinate sampling
        corrupt: Name of one check whose analytic gradient is sign-flipped
        max_coords: Coordinates sampled per parameter tensor in the composite checks

    Returns:
        dict: check name -> worst relative error
    """
    results = {}
    with precision("float64"):
        rng = np.random.default_rng(seed)
        checks = {}
        checks.update(_layer_checks(rng))
        checks.update(_curve_checks(rng))
        checks.update(_loss_checks(rng))
        if corrupt is not None and corrupt not in checks and corrupt not in ("composite_plain", "composite_dsc"):
            raise ValueError(f"Unknown gradient check: {corrupt}")

        for name, (fn, params) in checks.items():
            sign = -1.0 if name == corrupt else 1.0
            results[name] = grad_check(fn, params, seed=seed, analytic_sign=sign)
            Logger.debug(f"gradcheck {name}: {results[name]:.3e}", name=__name__)

        for variant, downsample in (("plain", 1), ("dsc", 2)):
            name = f"composite_{variant}"
            fn, params = _composite_check(variant, rng, seed, downsample)
            sign = -1.0 if name == corrupt else 1.0
            results[name] = grad_check(fn, params, max_coords=max_coords, seed=seed, analytic_sign=sign)
            Logger.debug(f"gradcheck {name}: {results[name]:.3e}", name=__name__)

    failed = [name for name, error in results.items() if not error < GRADIENT_TOLERANCE]
    if failed:
        Logger.error(f"Gradient checks above {GRADIENT_TOLERANCE}: {failed}", name=__name__)
    else:
        Logger.info(f"All {len(results)} gradient checks below {GRADIENT_TOLERANCE}", name=__name__)
    return results


def suite_passed(results: Dict[str, float]) -> bool:
    return all(error < GRADIENT_TOLERANCE for error in results.values())
