"""
Image decoding and encoding.

Every image handed to the rest of the package is a float32 array of shape
(3, H, W) with values in [0, 1]. PNG (8/16-bit; gray, RGB, palette, with or
without alpha) and binary PPM (P6) are read; 8-bit RGB PNG and P6 PPM are
written with round-half-up quantization.
"""

from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import png
from PIL import Image

from .functional import interpolation_matrix
from .logger import Logger
from .tensor import Tensor

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PPM_SIGNATURE = b"P6"
SUPPORTED_SUFFIXES = {".png": "PNG", ".ppm": "PPM", ".pnm": "PPM"}
SIXTEEN_BIT_MAX = 65535.0


class ImageIOError(ValueError):
    """Base class of image decode/encode failures."""


class UnsupportedFormatError(ImageIOError):
    """File is neither PNG nor binary PPM, or the output extension is unknown."""


class CorruptImageError(ImageIOError):
    """File claims a supported format but cannot be decoded."""


def _sniff(path: Path) -> str:
    with open(path, "rb") as handle:
        head = handle.read(len(PNG_SIGNATURE))
    if head.startswith(PNG_SIGNATURE):
        return "PNG"
    if head.startswith(PPM_SIGNATURE):
        return "PPM"
    Logger.error(f"Unsupported image format: {path} (header {head[:4]!r})", name=__name__)
    raise UnsupportedFormatError(f"Unsupported image format: {path}")


def _png_bit_depth(path: Path) -> int:
    with open(path, "rb") as handle:
        header = handle.read(26)
    # IHDR is the first chunk; its bit depth follows width and height
    if len(header) < 26 or header[12:16] != b"IHDR":
        return 8
    return header[24]


def _load_png16(path: Path) -> np.ndarray:
    width, height, rows, info = png.Reader(filename=str(path)).asDirect()
    planes = info["planes"]
    raster = np.array([np.asarray(row, dtype=np.float64) for row in rows]).reshape(height, width, planes)
    # gray or gray+alpha has one colour plane, RGB or RGBA three
    color = raster[:, :, :3] if planes >= 3 else np.repeat(raster[:, :, :1], 3, axis=2)
    return color.transpose(2, 0, 1) / SIXTEEN_BIT_MAX


def load(path) -> np.ndarray:
    """
    Decode a PNG or P6 PPM file.

    8-bit samples are divided by 255 and 16-bit samples by 65535;
    grayscale is replicated to three channels and alpha is dropped.

    Returns:
        np.ndarray: float32 (3, H, W) in [0, 1]

    Raises:
        FileNotFoundError: If the file does not exist
        UnsupportedFormatError: Neither PNG nor P6 PPM
        CorruptImageError: The stream cannot be decoded
    """
    path = Path(path)
    if not path.is_file():
        Logger.error(f"Image not found: {path}", name=__name__)
        raise FileNotFoundError(f"Image not found: {path}")
    expected = _sniff(path)

    try:
        if expected == "PNG" and _png_bit_depth(path) == 16:
            pixels = _load_png16(path)
        else:
            with Image.open(path, formats=[expected]) as img:
                img.load()
                rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
                pixels = rgb.transpose(2, 0, 1)
    except Exception as e:
        Logger.error(f"Corrupt image {path}: {e}", name=__name__)
        raise CorruptImageError(f"Corrupt image {path}: {e}") from e

    if pixels.shape[1] < 1 or pixels.shape[2] < 1:
        raise CorruptImageError(f"Corrupt image {path}: empty raster")
    Logger.debug(f"Loaded {path} ({pixels.shape[2]}x{pixels.shape[1]})", name=__name__)
    return np.clip(pixels, 0.0, 1.0).astype(np.float32)


def quantize(img: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] and map to bytes with round-half-up: floor(v*255 + 0.5)."""
    values = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.floor(values * 255.0 + 0.5).astype(np.uint8)


def dequantize(data: np.ndarray) -> np.ndarray:
    return (np.asarray(data, dtype=np.float32) / 255.0).astype(np.float32)


def _as_chw(img: Union[np.ndarray, Tensor]) -> np.ndarray:
    data = np.asarray(getattr(img, "data", img))
    if data.ndim == 4 and data.shape[0] == 1:
        data = data[0]
    if data.ndim != 3 or data.shape[0] != 3:
        Logger.error(f"Expected a (3, H, W) image, got shape {data.shape}", name=__name__)
        raise ValueError(f"Expected a (3, H, W) image, got shape {data.shape}")
    return data


def _output_format(path: Path) -> str:
    fmt = SUPPORTED_SUFFIXES.get(path.suffix.lower())
    if fmt is None:
        Logger.error(f"Unsupported output extension: {path.suffix} ({path})", name=__name__)
        raise UnsupportedFormatError(f"Unsupported output extension: {path.suffix}; use .png or .ppm")
    return fmt


def save(img: Union[np.ndarray, Tensor], path) -> Path:
    """Write a (3, H, W) image as 8-bit RGB; the extension selects PNG or PPM."""
    path = Path(path)
    fmt = _output_format(path)
    raster = quantize(_as_chw(img)).transpose(1, 2, 0)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(raster)).save(path, format=fmt)
    Logger.debug(f"Saved {path}", name=__name__)
    return path


def save_grayscale(values: np.ndarray, path, normalize: bool = True) -> Path:
    """
    Write a 2-D map as an 8-bit grayscale image.

    With `normalize`, values are min-max scaled to [0, 1] first; a constant
    map becomes black.
    """
    path = Path(path)
    fmt = _output_format(path)
    data = np.asarray(values, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"Expected a 2-D map, got shape {data.shape}")
    if normalize:
        low, high = data.min(), data.max()
        data = (data - low) / (high - low) if high > low else np.zeros_like(data)
    gray = quantize(data)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "PPM":
        Image.fromarray(np.repeat(gray[:, :, None], 3, axis=2)).save(path, format=fmt)
    else:
        Image.fromarray(gray).save(path, format=fmt)
    return path


def resize(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Align-corners bilinear resize of a (C, H, W) array."""
    if height < 1 or width < 1:
        raise ValueError(f"Target size must be positive, got {height}x{width}")
    rows = interpolation_matrix(img.shape[1], height).astype(np.float64)
    cols = interpolation_matrix(img.shape[2], width).astype(np.float64)
    resized = np.matmul(np.matmul(rows, img.astype(np.float64)), cols.T)
    # weights are stored at working precision and may sum to 1 + ulp
    return np.clip(resized, 0.0, 1.0).astype(np.float32)


def list_images(directory) -> List[Path]:
    """Files with a supported image suffix, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        Logger.error(f"Image directory not found: {directory}", name=__name__)
        raise FileNotFoundError(f"Image directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in SUPPORTED_SUFFIXES)


def to_batch(images: Sequence[np.ndarray]) -> Tensor:
    """Stack (3, H, W) images into an (N, 3, H, W) Tensor."""
    return Tensor(np.stack([_as_chw(img) for img in images]))


def from_batch(batch: Tensor) -> List[np.ndarray]:
    return [np.asarray(item) for item in batch.data]
