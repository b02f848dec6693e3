import numpy as np
import pytest

from components.functional import (
    avg_pool,
    concat_channels,
    conv2d,
    depthwise_conv2d,
    interpolation_matrix,
    output_shape,
    pointwise_conv2d,
    relu,
    resize_bilinear,
    tanh,
)
from components.tensor import ShapeError, Tape, Tensor, backward


def identity_kernel(channels):
    weight = np.zeros((channels, channels, 3, 3))
    for c in range(channels):
        weight[c, c, 1, 1] = 1.0
    return Tensor(weight)


class TestConv2d:
    def test_identity_kernel_is_exact(self, float64, rng):
        x = Tensor(rng.uniform(size=(2, 3, 7, 5)))
        out = conv2d(x, identity_kernel(3), Tensor(np.zeros(3)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_single_pixel_sees_only_the_centre_tap(self):
        out = conv2d(Tensor(np.ones((1, 1, 1, 1))), Tensor(np.ones((1, 1, 3, 3))), Tensor([1.0]))
        assert out.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 2.0

    def test_output_shape(self, rng):
        x = Tensor(rng.uniform(size=(2, 3, 8, 8)))
        out = conv2d(x, Tensor(rng.normal(size=(32, 3, 3, 3))), Tensor(np.zeros(32)))
        assert out.shape == (2, 32, 8, 8)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError):
            conv2d(Tensor(np.zeros((1, 4, 5, 5))), Tensor(np.zeros((2, 3, 3, 3))), Tensor(np.zeros(2)))

    def test_border_uses_zero_padding(self, float64):
        x = Tensor(np.ones((1, 1, 3, 3)))
        out = conv2d(x, Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))
        np.testing.assert_array_equal(out.data[0, 0], [[4, 6, 4], [6, 9, 6], [4, 6, 4]])


class TestDepthwiseConv2d:
    def test_identity(self, float64, rng):
        x = Tensor(rng.uniform(size=(1, 4, 6, 6)))
        weight = np.zeros((4, 1, 3, 3))
        weight[:, 0, 1, 1] = 1.0
        out = depthwise_conv2d(x, Tensor(weight), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_constant_kernel_on_two_by_two(self):
        x = Tensor(np.ones((1, 2, 2, 2)))
        weight = np.stack([np.full((1, 3, 3), 0.5), np.full((1, 3, 3), 2.0)])
        out = depthwise_conv2d(x, Tensor(weight), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data[0, 0], np.full((2, 2), 2.0))
        np.testing.assert_allclose(out.data[0, 1], np.full((2, 2), 8.0))

    def test_matches_block_diagonal_full_convolution(self, rng):
        x = Tensor(rng.uniform(size=(2, 3, 6, 5)))
        dw = rng.normal(size=(3, 1, 3, 3))
        full = np.zeros((3, 3, 3, 3))
        for c in range(3):
            full[c, c] = dw[c, 0]
        bias = Tensor(rng.normal(size=3))
        expected = conv2d(x, Tensor(full), bias).data
        np.testing.assert_allclose(depthwise_conv2d(x, Tensor(dw), bias).data, expected, atol=1e-6)


class TestPointwiseConv2d:
    def test_channel_mixing(self):
        x = Tensor(np.stack([np.full((2, 2), 1.0), np.full((2, 2), 2.0)])[None])
        weight = Tensor(np.array([[1.0, 1.0], [2.0, -1.0], [0.0, 3.0]])[:, :, None, None])
        out = pointwise_conv2d(x, weight, Tensor([0.0, 0.5, -1.0]))
        assert out.shape == (1, 3, 2, 2)
        np.testing.assert_allclose(out.data[0, :, 0, 0], [3.0, 0.5, 5.0])

    def test_bad_weight(self):
        with pytest.raises(ShapeError):
            pointwise_conv2d(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((3, 2, 3, 3))), Tensor(np.zeros(3)))


class TestActivations:
    def test_relu(self):
        out = relu(Tensor([[-1.0, 0.0, 2.5]]))
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 2.5]])

    def test_relu_gradient_at_zero_is_zero(self):
        x = Tensor([-1.0, 0.0, 2.0])
        with Tape() as tape:
            tape.watch(x)
            loss = relu(x).sum()
        np.testing.assert_array_equal(backward(tape, loss)[x], [0.0, 0.0, 1.0])

    def test_tanh_range(self, rng):
        out = tanh(Tensor(rng.normal(scale=5.0, size=1000)))
        assert np.all(np.abs(out.data) <= 1.0)
        assert tanh(Tensor([0.0])).data[0] == 0.0


class TestConcat:
    def test_order_and_gradient(self, rng):
        a = Tensor(rng.uniform(size=(1, 2, 3, 3)))
        b = Tensor(rng.uniform(size=(1, 3, 3, 3)))
        with Tape() as tape:
            tape.watch(a, b)
            out = concat_channels(a, b)
            loss = out.sum()
        assert out.shape == (1, 5, 3, 3)
        np.testing.assert_array_equal(out.data[:, :2], a.data)
        grads = backward(tape, loss)
        np.testing.assert_array_equal(grads[a], np.ones_like(a.data))
        np.testing.assert_array_equal(grads[b], np.ones_like(b.data))

    def test_spatial_mismatch(self):
        with pytest.raises(ShapeError):
            concat_channels(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros((1, 1, 3, 4))))


class TestAvgPool:
    def test_constant(self):
        out = avg_pool(Tensor(np.full((1, 3, 8, 8), 0.25)), 4)
        np.testing.assert_allclose(out.data, np.full((1, 3, 2, 2), 0.25))

    def test_window_mean(self):
        out = avg_pool(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2)
        assert out.data.item() == 2.5

    def test_grid_size(self):
        assert avg_pool(Tensor(np.zeros((1, 1, 512, 512))), 16).shape == (1, 1, 32, 32)

    def test_partial_windows_are_dropped(self):
        x = np.zeros((1, 1, 5, 5))
        x[0, 0, 4, :] = 100.0
        out = avg_pool(Tensor(x), 2)
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data, np.zeros((1, 1, 2, 2)))

    def test_non_positive_region(self):
        with pytest.raises(ValueError):
            avg_pool(Tensor(np.zeros((1, 1, 4, 4))), 0)


class TestResize:
    def test_constant_survives_down_and_up(self):
        x = Tensor(np.full((1, 3, 48, 36), 0.3))
        small = resize_bilinear(x, 4, 3)
        back = resize_bilinear(small, 48, 36)
        np.testing.assert_allclose(small.data, 0.3, atol=1e-6)
        np.testing.assert_allclose(back.data, 0.3, atol=1e-6)

    def test_align_corners_ramp(self, float64):
        x = Tensor(np.array([[[[0.0, 1.0], [0.0, 1.0]]]]))
        out = resize_bilinear(x, 2, 4)
        np.testing.assert_allclose(out.data[0, 0], [[0, 1 / 3, 2 / 3, 1]] * 2, atol=1e-12)

    def test_same_size_is_identity(self, float64, rng):
        x = Tensor(rng.uniform(size=(1, 2, 5, 7)))
        np.testing.assert_allclose(resize_bilinear(x, 5, 7).data, x.data, atol=1e-15)

    def test_output_stays_within_input_range(self, rng):
        x = Tensor(rng.uniform(0.2, 0.7, size=(1, 3, 9, 11)))
        out = resize_bilinear(x, 23, 4).data
        assert out.min() >= x.data.min() - 1e-6
        assert out.max() <= x.data.max() + 1e-6

    def test_non_positive_size(self):
        with pytest.raises(ValueError):
            resize_bilinear(Tensor(np.zeros((1, 1, 4, 4))), 0, 3)

    def test_interpolation_rows_sum_to_one(self, float64):
        matrix = interpolation_matrix(13, 5)
        np.testing.assert_allclose(matrix.sum(axis=1), np.ones(5), atol=1e-12)
        assert matrix[0, 0] == 1.0 and matrix[-1, -1] == 1.0


def test_output_shape_matches_computed_shapes(rng):
    for _ in range(10):
        n, c, h, w = (int(v) for v in rng.integers(1, 6, size=4))
        k = int(rng.integers(1, 5))
        x = Tensor(rng.uniform(size=(n, c, h, w)))
        weight = Tensor(rng.normal(size=(k, c, 3, 3)))
        assert conv2d(x, weight, Tensor(np.zeros(k))).shape == output_shape("conv2d", x.shape, weight.shape)
        pw = Tensor(rng.normal(size=(k, c, 1, 1)))
        assert pointwise_conv2d(x, pw, Tensor(np.zeros(k))).shape == output_shape("pointwise_conv2d", x.shape, pw.shape)
        assert relu(x).shape == output_shape("relu", x.shape)
        other = Tensor(np.zeros((n, 2, h, w)))
        assert concat_channels(x, other).shape == output_shape("concat_channels", x.shape, other.shape)
        pool = int(rng.integers(1, min(h, w) + 1))
        assert avg_pool(x, pool).shape == output_shape("avg_pool", x.shape, k=pool)
        assert resize_bilinear(x, 3, 7).shape == output_shape("resize_bilinear", x.shape, out_h=3, out_w=7)
