from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .curves import RGB, CurveParamMaps, apply_curve_maps
from .functional import (
    KERNEL,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    pointwise_conv2d,
    relu,
    resize_bilinear,
    tanh,
)
from .logger import Logger
from .tensor import ShapeError, Tensor


class Variant(str, Enum):
    PLAIN = "plain"
    DSC = "dsc"
    DSCONV = "dsconv"
    PSHARED = "pshared"


class ConvLayer:
    """3x3 convolution layer: weight (K, C, 3, 3) and bias (K,)."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, init_std: float, name: str):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.weight = Tensor(
            rng.normal(0.0, init_std, size=(out_channels, in_channels, KERNEL, KERNEL)),
            requires_grad=True,
            name=f"{name}.weight",
        )
        self.bias = Tensor(np.zeros(out_channels), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]

    def macs(self, height: int, width: int) -> int:
        return self.in_channels * self.out_channels * KERNEL * KERNEL * height * width


class SeparableConvLayer:
    """Depthwise 3x3 convolution followed by a pointwise 1x1 convolution."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, init_std: float, name: str):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.depthwise_weight = Tensor(
            rng.normal(0.0, init_std, size=(in_channels, 1, KERNEL, KERNEL)),
            requires_grad=True,
            name=f"{name}.depthwise.weight",
        )
        self.depthwise_bias = Tensor(np.zeros(in_channels), requires_grad=True, name=f"{name}.depthwise.bias")
        self.pointwise_weight = Tensor(
            rng.normal(0.0, init_std, size=(out_channels, in_channels, 1, 1)),
            requires_grad=True,
            name=f"{name}.pointwise.weight",
        )
        self.pointwise_bias = Tensor(np.zeros(out_channels), requires_grad=True, name=f"{name}.pointwise.bias")

    def __call__(self, x: Tensor) -> Tensor:
        x = depthwise_conv2d(x, self.depthwise_weight, self.depthwise_bias)
        return pointwise_conv2d(x, self.pointwise_weight, self.pointwise_bias)

    def parameters(self) -> List[Tensor]:
        return [self.depthwise_weight, self.depthwise_bias, self.pointwise_weight, self.pointwise_bias]

    def macs(self, height: int, width: int) -> int:
        return (self.in_channels * KERNEL * KERNEL + self.in_channels * self.out_channels) * height * width


@dataclass
class DCENet:
    """
    Curve estimation network.

    `depth` convolution layers with `features` channels each. The first
    depth - k layers run straight through with ReLU, where k = (depth-1)//2;
    skip layer j then reads the concatenation of the previous layer's output
    and the output of forward layer depth-k-j. For depth 7 this pairs
    5<-(4,3), 6<-(5,2), 7<-(6,1). The last layer uses Tanh and emits 3*n
    maps, or 3 when the variant shares one map across iterations.
    """
    variant: Variant
    layers: list
    iterations: int
    downsample_factor: int
    features: int
    depth: int
    shared: bool

    @property
    def forward_layers(self) -> int:
        return self.depth - (self.depth - 1) // 2

    @property
    def out_channels(self) -> int:
        return RGB if self.shared else RGB * self.iterations

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, img: Tensor) -> CurveParamMaps:
        if img.ndim != 4 or img.shape[1] != RGB:
            Logger.error(f"DCENet expects an (N, 3, H, W) image batch, got {img.shape}", name=__name__)
            raise ShapeError(f"DCENet expects an (N, 3, H, W) image batch, got {img.shape}")

        outputs = []
        x = img
        for layer in self.layers[:self.forward_layers]:
            x = relu(layer(x))
            outputs.append(x)

        skips = self.depth - self.forward_layers
        for j in range(1, skips + 1):
            layer = self.layers[self.forward_layers + j - 1]
            x = concat_channels(outputs[-1], outputs[self.forward_layers - j - 1])
            x = layer(x)
            x = tanh(x) if j == skips else relu(x)
            outputs.append(x)

        return CurveParamMaps(x, self.iterations, shared=self.shared)

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


class NetworkFactory:
    """
    Factory for building curve estimation networks by variant name.

    Key Responsibilities:
    - Map variant names to layer type, map sharing and default downsampling
    - Seed the Gaussian weight initialization so builds are reproducible
    - Lay out the skip topology for any depth of the l-f-n grid

    Supported Variants:
    - plain: standard 3x3 convolutions, 3*n per-iteration maps, full resolution
    - dsc: depthwise separable convolutions, one shared map, 12x downsampling
    - dsconv: depthwise separable convolutions with 3*n per-iteration maps
    - pshared: standard convolutions with one shared map
    """

    # code is the variant byte stored in checkpoints
    VARIANT_CONFIGS = {
        Variant.PLAIN: {'code': 0, 'separable': False, 'shared': False, 'downsample': 1},
        Variant.DSC: {'code': 1, 'separable': True, 'shared': True, 'downsample': 12},
        Variant.DSCONV: {'code': 2, 'separable': True, 'shared': False, 'downsample': 12},
        Variant.PSHARED: {'code': 3, 'separable': False, 'shared': True, 'downsample': 12},
    }

    @classmethod
    def resolve(cls, variant) -> Variant:
        try:
            return Variant(variant)
        except ValueError:
            Logger.error(f"Unsupported variant: {variant}. Supported variants: {cls.get_available_variants()}",
                         name=__name__)
            raise ValueError(f"Unsupported variant: {variant}. Supported variants: {cls.get_available_variants()}")

    @classmethod
    def from_code(cls, code: int) -> Optional[Variant]:
        for variant, config in cls.VARIANT_CONFIGS.items():
            if config['code'] == code:
                return variant
        return None

    @classmethod
    def create(
        cls,
        variant,
        seed: int = 0,
        depth: int = 7,
        features: int = 32,
        iterations: int = 8,
        downsample_factor: int = None,
        init_std: float = 0.02,
    ) -> DCENet:
        """
        Build a freshly initialized network.

        Args:
            variant: 'plain', 'dsc', 'dsconv' or 'pshared'
            seed: Seed of the Gaussian weight initialization
            depth: Number of convolution layers (l), at least 3
            features: Channels of every hidden layer (f)
            iterations: Curve iterations (n)
            downsample_factor: Inference downsampling; the variant default if None

        Returns:
            DCENet: weights ~ N(0, init_std^2), biases 0

        Raises:
            ValueError: If the variant or the l-f-n configuration is invalid
        """
        variant = cls.resolve(variant)
        config = cls.VARIANT_CONFIGS[variant]
        if depth < 3:
            Logger.error(f"Network depth must be >= 3, got {depth}", name=__name__)
            raise ValueError(f"Network depth must be >= 3, got {depth}")
        if features < 1 or iterations < 1:
            Logger.error(f"features and iterations must be >= 1, got f={features}, n={iterations}", name=__name__)
            raise ValueError(f"features and iterations must be >= 1, got f={features}, n={iterations}")
        if iterations > 255:
            raise ValueError(f"iterations must fit in one byte, got {iterations}")
        if downsample_factor is None:
            downsample_factor = config['downsample']
        if not 1 <= downsample_factor <= 65535:
            raise ValueError(f"downsample_factor must be in [1, 65535], got {downsample_factor}")

        Logger.debug(f"Building {variant.value} network l={depth} f={features} n={iterations} seed={seed}",
                     name=__name__)

        layer_type = SeparableConvLayer if config['separable'] else ConvLayer
        out_channels = RGB if config['shared'] else RGB * iterations
        forward_layers = depth - (depth - 1) // 2
        rng = np.random.default_rng(seed)

        layers = []
        for index in range(depth):
            in_channels = RGB if index == 0 else (features if index < forward_layers else 2 * features)
            layer_out = out_channels if index == depth - 1 else features
            layers.append(layer_type(in_channels, layer_out, rng, init_std, name=f"conv{index + 1}"))

        model = DCENet(
            variant=variant,
            layers=layers,
            iterations=iterations,
            downsample_factor=downsample_factor,
            features=features,
            depth=depth,
            shared=config['shared'],
        )
        Logger.info(f"Built {variant.value} network with {model.param_count()} parameters", name=__name__)
        return model

    @classmethod
    def get_available_variants(cls) -> list:
        """Get list of available variant names."""
        available = [variant.value for variant in cls.VARIANT_CONFIGS]
        Logger.debug(f"Available variants: {available}", name=__name__)
        return available


def build(variant, seed: int = 0, **kwargs) -> DCENet:
    return NetworkFactory.create(variant, seed=seed, **kwargs)


def forward(model: DCENet, img: Tensor) -> CurveParamMaps:
    return model.forward(img)


def param_count(model: DCENet) -> int:
    """Exact number of weight and bias elements."""
    return model.param_count()


def network_resolution(height: int, width: int, downsample: int) -> Tuple[int, int]:
    """Spatial size the network runs at: floor(H/d) x floor(W/d)."""
    if height < 1 or width < 1:
        Logger.error(f"Image size must be positive, got {height}x{width}", name=__name__)
        raise ValueError(f"Image size must be positive, got {height}x{width}")
    if downsample < 1:
        raise ValueError(f"downsample factor must be >= 1, got {downsample}")
    small_h, small_w = height // downsample, width // downsample
    if small_h < 1 or small_w < 1:
        Logger.error(
            f"Input {height}x{width} is too small for downsample factor {downsample}; "
            f"minimum input size is {downsample}x{downsample}",
            name=__name__,
        )
        raise ValueError(
            f"Input {height}x{width} is too small for downsample factor {downsample}; "
            f"minimum input size is {downsample}x{downsample}"
        )
    return small_h, small_w


def estimate_curves(model: DCENet, img: Tensor, downsample: int = None) -> CurveParamMaps:
    """
    Curve parameter maps at the input's full resolution.

    With a downsample factor d > 1 the network sees a bilinear
    floor(H/d) x floor(W/d) copy of the input and its maps are resized back.
    """
    downsample = model.downsample_factor if downsample is None else downsample
    height, width = img.shape[2], img.shape[3]
    small_h, small_w = network_resolution(height, width, downsample)
    if downsample == 1:
        return model.forward(img)

    Logger.debug(f"Estimating curves at {small_h}x{small_w} for a {height}x{width} input", name=__name__)
    maps = model.forward(resize_bilinear(img, small_h, small_w))
    return maps.resized(height, width)


def enhance(model: DCENet, img: Tensor, downsample: int = None) -> Tensor:
    """Estimate curves and apply them to the full-resolution input; output stays in [0, 1]."""
    return apply_curve_maps(img, estimate_curves(model, img, downsample))


def flops(model: DCENet, height: int, width: int, downsample: int = None) -> int:
    """
    Multiply-accumulate count of one enhancement.

    Network layers are counted at floor(H/d) x floor(W/d), biases excluded.
    Each curve step costs 2 MACs per pixel and channel at full resolution.
    Resizing is not counted.
    """
    downsample = model.downsample_factor if downsample is None else downsample
    small_h, small_w = network_resolution(height, width, downsample)
    network_macs = sum(layer.macs(small_h, small_w) for layer in model.layers)
    curve_macs = 2 * RGB * model.iterations * height * width
    return network_macs + curve_macs


def layer_report(model: DCENet) -> List[Dict[str, int]]:
    """Per-layer channel plan and parameter count, used by `info`."""
    return [
        {
            "layer": index + 1,
            "in_channels": layer.in_channels,
            "out_channels": layer.out_channels,
            "parameters": sum(p.size for p in layer.parameters()),
        }
        for index, layer in enumerate(model.layers)
    ]
