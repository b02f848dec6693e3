"""
Layer-level operations with analytic backward rules.

Every convolution is stride 1 with a 3x3 (or 1x1) kernel; 3x3 kernels use
one pixel of zero padding so spatial size is preserved. Inner loops run
over the kernel taps in a fixed order, so the floating point reduction
order does not depend on threading.
"""

from typing import Tuple

import numpy as np

from .logger import Logger
from .tensor import ShapeError, Tensor, get_dtype, record

KERNEL = 3
PAD = 1


def _require_4d(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        Logger.error(f"{op}: expected a 4-D (N, C, H, W) tensor, got shape {x.shape}", name=__name__)
        raise ShapeError(f"{op}: expected a 4-D (N, C, H, W) tensor, got shape {x.shape}")


def _pad(data: np.ndarray) -> np.ndarray:
    return np.pad(data, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))


def conv2d(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    3x3 cross-correlation with zero padding 1 plus a per-channel bias.

    Args:
        input: (N, C, H, W)
        weight: (K, C, 3, 3)
        bias: (K,)

    Returns:
        Tensor: (N, K, H, W)
    """
    _require_4d(input, "conv2d")
    n, channels, height, width = input.shape
    if weight.ndim != 4 or weight.shape[2:] != (KERNEL, KERNEL):
        raise ShapeError(f"conv2d: weight must be (K, C, 3, 3), got {weight.shape}")
    if weight.shape[1] != channels:
        Logger.error(f"conv2d: input has {channels} channels, weight expects {weight.shape[1]}", name=__name__)
        raise ShapeError(f"conv2d: input has {channels} channels, weight expects {weight.shape[1]}")
    out_channels = weight.shape[0]
    if bias.shape != (out_channels,):
        raise ShapeError(f"conv2d: bias must be ({out_channels},), got {bias.shape}")

    padded = _pad(input.data)
    out = np.empty((n, out_channels, height, width), dtype=get_dtype())
    out[...] = bias.data[None, :, None, None]
    for i in range(KERNEL):
        for j in range(KERNEL):
            patch = padded[:, :, i:i + height, j:j + width]
            # (N, H, W, K) -> (N, K, H, W)
            out += np.tensordot(patch, weight.data[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)

    def backward_fn(g):
        grad_weight = np.empty_like(weight.data)
        grad_padded = np.zeros_like(padded)
        for i in range(KERNEL):
            for j in range(KERNEL):
                patch = padded[:, :, i:i + height, j:j + width]
                grad_weight[:, :, i, j] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
                grad_padded[:, :, i:i + height, j:j + width] += np.tensordot(
                    g, weight.data[:, :, i, j], axes=([1], [0])
                ).transpose(0, 3, 1, 2)
        grad_input = np.ascontiguousarray(grad_padded[:, :, PAD:PAD + height, PAD:PAD + width])
        return grad_input, grad_weight, g.sum(axis=(0, 2, 3))

    return record("conv2d", (input, weight, bias), Tensor(out), backward_fn)


def depthwise_conv2d(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    One 3x3 kernel per channel; output channel c only sees input channel c.

    Args:
        input: (N, C, H, W)
        weight: (C, 1, 3, 3)
        bias: (C,)
    """
    _require_4d(input, "depthwise_conv2d")
    n, channels, height, width = input.shape
    if weight.shape != (channels, 1, KERNEL, KERNEL):
        Logger.error(f"depthwise_conv2d: weight must be ({channels}, 1, 3, 3), got {weight.shape}", name=__name__)
        raise ShapeError(f"depthwise_conv2d: weight must be ({channels}, 1, 3, 3), got {weight.shape}")
    if bias.shape != (channels,):
        raise ShapeError(f"depthwise_conv2d: bias must be ({channels},), got {bias.shape}")

    padded = _pad(input.data)
    out = np.empty((n, channels, height, width), dtype=get_dtype())
    out[...] = bias.data[None, :, None, None]
    for i in range(KERNEL):
        for j in range(KERNEL):
            out += weight.data[None, :, 0, i, j, None, None] * padded[:, :, i:i + height, j:j + width]

    def backward_fn(g):
        grad_weight = np.empty_like(weight.data)
        grad_padded = np.zeros_like(padded)
        for i in range(KERNEL):
            for j in range(KERNEL):
                patch = padded[:, :, i:i + height, j:j + width]
                grad_weight[:, 0, i, j] = (g * patch).sum(axis=(0, 2, 3))
                grad_padded[:, :, i:i + height, j:j + width] += g * weight.data[None, :, 0, i, j, None, None]
        grad_input = np.ascontiguousarray(grad_padded[:, :, PAD:PAD + height, PAD:PAD + width])
        return grad_input, grad_weight, g.sum(axis=(0, 2, 3))

    return record("depthwise_conv2d", (input, weight, bias), Tensor(out), backward_fn)


def pointwise_conv2d(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """
    1x1 convolution: a per-pixel linear map across channels.

    Args:
        input: (N, C, H, W)
        weight: (K, C, 1, 1)
        bias: (K,)
    """
    _require_4d(input, "pointwise_conv2d")
    channels = input.shape[1]
    if weight.ndim != 4 or weight.shape[2:] != (1, 1) or weight.shape[1] != channels:
        Logger.error(f"pointwise_conv2d: weight must be (K, {channels}, 1, 1), got {weight.shape}", name=__name__)
        raise ShapeError(f"pointwise_conv2d: weight must be (K, {channels}, 1, 1), got {weight.shape}")
    out_channels = weight.shape[0]
    if bias.shape != (out_channels,):
        raise ShapeError(f"pointwise_conv2d: bias must be ({out_channels},), got {bias.shape}")

    matrix = weight.data[:, :, 0, 0]
    out = np.tensordot(input.data, matrix, axes=([1], [1])).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out) + bias.data[None, :, None, None]

    def backward_fn(g):
        grad_matrix = np.tensordot(g, input.data, axes=([0, 2, 3], [0, 2, 3]))
        grad_input = np.tensordot(g, matrix, axes=([1], [0])).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(grad_input), grad_matrix[:, :, None, None], g.sum(axis=(0, 2, 3))

    return record("pointwise_conv2d", (input, weight, bias), Tensor(out), backward_fn)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    # gradient at exactly 0 is 0
    return record("relu", (x,), out, lambda g: (g * (x.data > 0),))


def tanh(x: Tensor) -> Tensor:
    result = np.tanh(x.data)
    return record("tanh", (x,), Tensor(result), lambda g: (g * (1.0 - result * result),))


def concat_channels(*tensors: Tensor) -> Tensor:
    """Concatenate along the channel axis; earlier arguments come first."""
    if len(tensors) < 2:
        raise ValueError("concat_channels needs at least two tensors")
    for t in tensors:
        _require_4d(t, "concat_channels")
    first = tensors[0]
    for t in tensors[1:]:
        if t.shape[0] != first.shape[0] or t.shape[2:] != first.shape[2:]:
            Logger.error(f"concat_channels: batch/spatial mismatch {first.shape} vs {t.shape}", name=__name__)
            raise ShapeError(f"concat_channels: batch/spatial mismatch {first.shape} vs {t.shape}")

    out = Tensor(np.concatenate([t.data for t in tensors], axis=1))
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        return tuple(g[:, bounds[k]:bounds[k + 1]] for k in range(len(tensors)))

    return record("concat_channels", tensors, out, backward_fn)


def avg_pool(x: Tensor, k: int) -> Tensor:
    """
    Mean over non-overlapping k x k windows.

    Trailing rows/columns that do not fill a whole window are dropped,
    giving a floor(H/k) x floor(W/k) grid.
    """
    if k <= 0:
        Logger.error(f"avg_pool: region size must be positive, got {k}", name=__name__)
        raise ValueError(f"avg_pool: region size must be positive, got {k}")
    _require_4d(x, "avg_pool")
    n, channels, height, width = x.shape
    grid_h, grid_w = height // k, width // k
    cropped = x.data[:, :, :grid_h * k, :grid_w * k]
    out = cropped.reshape(n, channels, grid_h, k, grid_w, k).mean(axis=(3, 5))

    def backward_fn(g):
        grad = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        grad[:, :, :grid_h * k, :grid_w * k] = spread
        return (grad,)

    return record("avg_pool", (x,), Tensor(out), backward_fn)


def interpolation_matrix(size_in: int, size_out: int) -> np.ndarray:
    """
    Align-corners linear interpolation weights, shape (size_out, size_in).

    Output sample i sits at input coordinate i*(size_in-1)/(size_out-1), so
    the first and last samples map exactly onto the corner pixels. Each row
    holds at most two non-negative weights summing to one.
    """
    if size_out == 1 or size_in == 1:
        positions = np.zeros(size_out)
    else:
        positions = np.arange(size_out, dtype=np.float64) * (size_in - 1) / (size_out - 1)
    low = np.minimum(np.floor(positions).astype(np.int64), size_in - 1)
    high = np.minimum(low + 1, size_in - 1)
    frac = positions - low

    matrix = np.zeros((size_out, size_in), dtype=np.float64)
    rows = np.arange(size_out)
    np.add.at(matrix, (rows, low), 1.0 - frac)
    np.add.at(matrix, (rows, high), frac)
    return matrix.astype(get_dtype())


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize with the align-corners convention, applied as two separable matrix products."""
    if out_h < 1 or out_w < 1:
        Logger.error(f"resize_bilinear: target size must be positive, got {out_h}x{out_w}", name=__name__)
        raise ValueError(f"resize_bilinear: target size must be positive, got {out_h}x{out_w}")
    _require_4d(x, "resize_bilinear")
    rows = interpolation_matrix(x.shape[2], out_h)
    cols = interpolation_matrix(x.shape[3], out_w)
    out = np.matmul(np.matmul(rows, x.data), cols.T)

    def backward_fn(g):
        return (np.matmul(np.matmul(rows.T, g), cols),)

    return record("resize_bilinear", (x,), Tensor(out), backward_fn)


def output_shape(op: str, *shapes: Tuple[int, ...], **kwargs) -> Tuple[int, ...]:
    """Shape an operation produces for the given input shapes, without computing it."""
    if op in ("conv2d", "pointwise_conv2d"):
        (n, _, h, w), (k, *_rest) = shapes[0], shapes[1]
        return (n, k, h, w)
    if op in ("depthwise_conv2d", "relu", "tanh"):
        return tuple(shapes[0])
    if op == "concat_channels":
        n, _, h, w = shapes[0]
        return (n, sum(s[1] for s in shapes), h, w)
    if op == "avg_pool":
        n, c, h, w = shapes[0]
        k = kwargs["k"]
        return (n, c, h // k, w // k)
    if op == "resize_bilinear":
        n, c, _, _ = shapes[0]
        return (n, c, kwargs["out_h"], kwargs["out_w"])
    raise ValueError(f"Unknown op: {op}")
