import numpy as np
import pytest

from components.optimizer import Adam, AdamState, adam_step
from components.tensor import Tape, Tensor, backward


def test_zero_gradient_leaves_parameters_unchanged():
    param = Tensor([1.0, -2.0], requires_grad=True)
    adam_step([param], [np.zeros(2)], AdamState(), lr=0.1)
    np.testing.assert_array_equal(param.data, [1.0, -2.0])


def test_first_step_moves_by_the_learning_rate():
    param = Tensor([1.0], requires_grad=True)
    state = adam_step([param], [np.ones(1)], AdamState(), lr=0.1)
    assert param.data[0] == pytest.approx(0.9, abs=1e-6)
    assert state.step == 1


def test_constant_gradient_keeps_decreasing():
    param = Tensor([1.0], requires_grad=True)
    optimizer = Adam([param], lr=0.1)
    values = []
    for _ in range(2):
        optimizer.step([np.ones(1)])
        values.append(param.data[0])
    assert values[1] < values[0] < 1.0


def test_converges_on_a_quadratic(float64):
    param = Tensor([0.0], requires_grad=True)
    optimizer = Adam([param], lr=0.1)
    for _ in range(2000):
        with Tape() as tape:
            loss = (param - 3.0).square().sum()
        optimizer.step(backward(tape, loss).for_parameters([param]))
    assert abs(param.data[0] - 3.0) < 1e-2


def test_second_moment_is_non_negative(rng):
    param = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    state = AdamState()
    for _ in range(5):
        adam_step([param], [rng.normal(size=(3, 4))], state, lr=0.01)
    assert all(np.all(v >= 0) for v in state.v)
    assert state.step == 5


def test_zero_learning_rate():
    param = Tensor([0.5], requires_grad=True)
    Adam([param], lr=0.0).step([np.array([3.0])])
    assert param.data[0] == 0.5


def test_shape_mismatch():
    param = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        adam_step([param], [np.zeros(3)], AdamState(), lr=0.1)
    with pytest.raises(ValueError):
        adam_step([param], [], AdamState(), lr=0.1)


def test_negative_learning_rate():
    with pytest.raises(ValueError):
        Adam([], lr=-1.0)
