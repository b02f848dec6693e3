"""
Binary checkpoint format.

    magic      4 bytes  b"ZDCE"
    version    u32
    variant    u8       plain=0, dsc=1, dsconv=2, pshared=3
    n          u8       curve iterations
    downsample u16
    then for every parameter tensor in layer order:
        rank   u32
        extent u32 x rank
        data   f32 x prod(extents), row-major

Everything is little-endian. Depth and width are recovered from the
tensor shapes, so any network of the l-f-n grid round-trips.
"""

import struct
from pathlib import Path
from typing import List

import numpy as np

from .logger import Logger
from .network import DCENet, NetworkFactory
from .tensor import Tensor

MAGIC = b"ZDCE"
VERSION = 1
_HEADER = struct.Struct("<4sIBBH")
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    """Base class of checkpoint load failures."""


class NotACheckpointError(CheckpointError):
    """File does not start with the checkpoint magic."""


class CheckpointVersionError(CheckpointError):
    """File was written by an unsupported format version."""


class TruncatedCheckpointError(CheckpointError):
    """File ends inside a header or tensor payload."""


class CheckpointLayoutError(CheckpointError):
    """Tensor shapes are inconsistent with the variant in the header."""


def save(model: DCENet, path) -> Path:
    """Write `model` to `path`; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    code = NetworkFactory.VARIANT_CONFIGS[model.variant]['code']

    chunks = [_HEADER.pack(MAGIC, VERSION, code, model.iterations, model.downsample_factor)]
    for param in model.parameters():
        chunks.append(_U32.pack(param.ndim))
        chunks.append(struct.pack(f"<{param.ndim}I", *param.shape))
        chunks.append(np.ascontiguousarray(param.data, dtype="<f4").tobytes())

    path.write_bytes(b"".join(chunks))
    Logger.info(f"Saved {model.variant.value} checkpoint to {path}", name=__name__)
    return path


def _read_tensors(payload: bytes, offset: int, path: Path) -> List[np.ndarray]:
    tensors = []
    while offset < len(payload):
        if offset + _U32.size > len(payload):
            raise TruncatedCheckpointError(f"{path}: truncated tensor header at byte {offset}")
        (rank,) = _U32.unpack_from(payload, offset)
        offset += _U32.size
        if rank > 4:
            raise CheckpointLayoutError(f"{path}: tensor {len(tensors)} has unsupported rank {rank}")
        if offset + 4 * rank > len(payload):
            raise TruncatedCheckpointError(f"{path}: truncated shape header of tensor {len(tensors)}")
        shape = struct.unpack_from(f"<{rank}I", payload, offset)
        offset += 4 * rank
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(payload):
            raise TruncatedCheckpointError(
                f"{path}: tensor {len(tensors)} {shape} needs {nbytes} bytes, {len(payload) - offset} left"
            )
        tensors.append(np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape))
        offset += nbytes
    return tensors


def load(path) -> DCENet:
    """
    Read a checkpoint written by `save`.

    Raises:
        FileNotFoundError: If the path does not exist
        NotACheckpointError: Bad magic
        CheckpointVersionError: Unsupported version
        TruncatedCheckpointError: File ends mid-record
        CheckpointLayoutError: Shapes disagree with the header's variant and n
    """
    path = Path(path)
    if not path.is_file():
        Logger.error(f"Checkpoint not found: {path}", name=__name__)
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    payload = path.read_bytes()

    try:
        if payload[:len(MAGIC)] != MAGIC:
            raise NotACheckpointError(f"{path}: not a checkpoint (magic {payload[:len(MAGIC)]!r})")
        if len(payload) < _HEADER.size:
            raise TruncatedCheckpointError(f"{path}: truncated header")
        _, version, code, iterations, downsample = _HEADER.unpack_from(payload, 0)
        if version != VERSION:
            raise CheckpointVersionError(f"{path}: unsupported checkpoint version {version} (expected {VERSION})")
        variant = NetworkFactory.from_code(code)
        if variant is None:
            raise CheckpointLayoutError(f"{path}: unknown variant code {code}")

        tensors = _read_tensors(payload, _HEADER.size, path)
        model = _rebuild(variant, iterations, downsample, tensors, path)
    except CheckpointError as e:
        Logger.error(str(e), name=__name__)
        raise

    Logger.info(f"Loaded {variant.value} checkpoint from {path} ({model.param_count()} parameters)", name=__name__)
    return model


def _rebuild(variant, iterations: int, downsample: int, tensors: List[np.ndarray], path: Path) -> DCENet:
    per_layer = 4 if NetworkFactory.VARIANT_CONFIGS[variant]['separable'] else 2
    if not tensors or len(tensors) % per_layer:
        raise CheckpointLayoutError(
            f"{path}: {len(tensors)} tensors cannot form {variant.value} layers of {per_layer} tensors"
        )
    depth = len(tensors) // per_layer
    first_weight = tensors[per_layer - 2]
    if depth < 3 or first_weight.ndim != 4 or iterations < 1 or downsample < 1:
        raise CheckpointLayoutError(f"{path}: inconsistent {variant.value} layout (depth {depth})")

    try:
        model = NetworkFactory.create(
            variant,
            depth=depth,
            features=first_weight.shape[0],
            iterations=iterations,
            downsample_factor=downsample,
        )
    except ValueError as e:
        raise CheckpointLayoutError(f"{path}: {e}") from e

    for index, (param, stored) in enumerate(zip(model.parameters(), tensors)):
        if param.shape != stored.shape:
            raise CheckpointLayoutError(
                f"{path}: tensor {index} ({param.name}) has shape {stored.shape}, "
                f"{variant.value} n={iterations} expects {param.shape}"
            )
        param.data = Tensor(stored).data.copy()
    return model
