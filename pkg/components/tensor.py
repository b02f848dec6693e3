import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .logger import Logger

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = np.float32
_local = threading.local()


class ShapeError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


def get_dtype():
    """Floating point type used for every newly created Tensor."""
    return _dtype


def set_precision(name: str) -> None:
    """
    Switch the global precision.

    float32 is used for training and inference; float64 gives finite
    difference checks enough headroom.
    """
    global _dtype
    if name not in _PRECISIONS:
        Logger.error(f"Unsupported precision: {name}. Supported: {list(_PRECISIONS)}", name=__name__)
        raise ValueError(f"Unsupported precision: {name}. Supported: {list(_PRECISIONS)}")
    _dtype = _PRECISIONS[name]
    Logger.debug(f"Precision set to {name}", name=__name__)


@contextmanager
def precision(name: str):
    """Temporarily switch the global precision."""
    previous = np.dtype(_dtype).name
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


class Tensor:
    """
    Dense N-dimensional array of real values.

    Image batches, feature maps, weights and curve parameter maps are all
    Tensors laid out as (batch, channels, height, width). Arithmetic on
    Tensors is recorded on the active Tape so that `backward` can compute
    gradients; parameters are marked with `requires_grad=True`.
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: str = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_dtype)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __neg__(self): return neg(self)
    def __abs__(self): return absolute(self)
    def __getitem__(self, index): return take(self, index)

    def abs(self) -> "Tensor":
        return absolute(self)

    def square(self) -> "Tensor":
        return square(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass(frozen=True)
class Node:
    """One recorded operation: inputs, output and its analytic backward rule."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def _tape_stack() -> List["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """
    Records operations for reverse-mode differentiation.

    Nodes are appended in execution order, so every node's inputs precede
    it. Only operations touching a tracked tensor (a parameter, a watched
    tensor, or the output of an earlier node) are recorded. A Tape belongs
    to the thread that entered it.

    Usage:
        with Tape() as tape:
            loss = (weight * x).sum()
        grads = backward(tape, loss)
        grads[weight]
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._produced: Dict[int, Tensor] = {}
        self._watched: Dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False

    def watch(self, *tensors: Tensor) -> None:
        """Track tensors that are not parameters (e.g. an input image)."""
        for tensor in tensors:
            self._watched[id(tensor)] = tensor

    def tracks(self, tensor: Tensor) -> bool:
        key = id(tensor)
        return tensor.requires_grad or key in self._produced or key in self._watched

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn) -> bool:
        if not any(self.tracks(t) for t in inputs):
            return False
        self.nodes.append(Node(op, tuple(inputs), output, backward_fn))
        self._produced[id(output)] = output
        return True

    def parameters(self) -> List[Tensor]:
        """Parameters reached by the recording, in first-use order."""
        seen, params = set(), []
        for node in self.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in seen:
                    seen.add(id(tensor))
                    params.append(tensor)
        return params


def record(op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn) -> Tensor:
    """Register an operation on the active tape, if any, and return its output."""
    tape = active_tape()
    if tape is not None:
        tape.record(op, inputs, output, backward_fn)
    return output


class Gradients:
    """Gradient lookup keyed by tensor; untouched tensors get zeros of their shape."""

    def __init__(self, grads: Dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def for_parameters(self, params: Sequence[Tensor]) -> List[np.ndarray]:
        return [self[p] for p in params]


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """
    Reverse-mode sweep over the tape from a scalar loss.

    Gradients of tensors used several times accumulate. Gradients of
    intermediate results are released once propagated; parameters and
    watched tensors keep theirs.

    Raises:
        ShapeError: If the loss is not a single value
    """
    if loss.data.size != 1:
        Logger.error(f"backward needs a scalar loss, got shape {loss.shape}", name=__name__)
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        key = id(node.output)
        upstream = grads.get(key)
        if upstream is None:
            continue
        if not node.output.requires_grad and key not in tape._watched:
            del grads[key]

        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tape.tracks(tensor):
                continue
            input_key = id(tensor)
            if input_key in grads:
                grads[input_key] = grads[input_key] + grad
            else:
                grads[input_key] = grad

    Logger.debug(f"backward swept {len(tape.nodes)} nodes", name=__name__)
    return Gradients(grads)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record("add", (a, b), out, backward_fn)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record("sub", (a, b), out, backward_fn)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward_fn(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return record("mul", (a, b), out, backward_fn)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)

    def backward_fn(g):
        return (unbroadcast(g / b.data, a.shape),
                unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return record("div", (a, b), out, backward_fn)


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data)
    return record("neg", (a,), out, lambda g: (-g,))


def absolute(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    # sign(0) = 0 is the subgradient used at the kink
    return record("abs", (a,), out, lambda g: (g * np.sign(a.data),))


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)
    return record("square", (a,), out, lambda g: (2.0 * a.data * g,))


def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims))

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.array(np.broadcast_to(g, a.shape)),)

    return record("sum", (a,), out, backward_fn)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean over an empty extent of shape {a.shape}")
    out = Tensor(a.data.mean(axis=axes, keepdims=keepdims))

    def backward_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.array(np.broadcast_to(g / count, a.shape)),)

    return record("mean", (a,), out, backward_fn)


def take(a: Tensor, index) -> Tensor:
    """Basic slicing; the gradient scatters back into a zero tensor."""
    out = Tensor(np.array(a.data[index]))

    def backward_fn(g):
        grad = np.zeros_like(a.data)
        grad[index] += g
        return (grad,)

    return record("slice", (a,), out, backward_fn)
