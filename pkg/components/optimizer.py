from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .logger import Logger
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates and step counter of one Adam run."""
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> AdamState:
    """
    One bias-corrected Adam update, applied to `params` in place.

    The step counter is incremented before the bias correction, so the
    first update uses t = 1.

    Raises:
        ValueError: If the parameter and gradient lists or shapes disagree
    """
    if len(params) != len(grads):
        Logger.error(f"adam_step: {len(params)} parameters but {len(grads)} gradients", name=__name__)
        raise ValueError(f"adam_step: {len(params)} parameters but {len(grads)} gradients")
    for index, (param, grad) in enumerate(zip(params, grads)):
        if np.shape(grad) != param.shape:
            Logger.error(f"adam_step: gradient {index} has shape {np.shape(grad)}, parameter {param.shape}",
                         name=__name__)
            raise ValueError(f"adam_step: gradient {index} has shape {np.shape(grad)}, parameter {param.shape}")

    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    elif len(state.m) != len(params):
        raise ValueError(f"adam_step: state tracks {len(state.m)} parameters, got {len(params)}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param, grad, m, v in zip(params, grads, state.m, state.v):
        grad = np.asarray(grad, dtype=param.data.dtype)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.data.dtype)
    return state


class Adam:
    """Adam bound to a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr < 0:
            raise ValueError(f"Learning rate must be >= 0, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.state = AdamState(beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Sequence[np.ndarray]) -> None:
        adam_step(self.params, grads, self.state, self.lr)
