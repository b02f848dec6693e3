import numpy as np
import pytest

from components.curves import (
    CurveParamMaps,
    CurveRangeError,
    apply_curve_maps,
    apply_curves,
    apply_curves_shared,
    curve_partials,
    le_step,
    set_range_checks,
)
from components.gradcheck import grad_check
from components.tensor import ShapeError, Tensor


def full(value, channels=3, size=(4, 4)):
    return Tensor(np.full((1, channels) + size, value))


class TestLEStep:
    @pytest.mark.parametrize("value", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_zero_alpha_is_identity(self, value):
        out = le_step(full(value), full(0.0))
        np.testing.assert_array_equal(out.data, full(value).data)

    def test_half_brightens_to_three_quarters(self):
        out = le_step(full(0.5), full(1.0))
        np.testing.assert_array_equal(out.data, np.full((1, 3, 4, 4), 0.75))

    @pytest.mark.parametrize("alpha", [-1.0, -0.3, 0.4, 1.0])
    def test_endpoints_are_fixed(self, alpha):
        img = Tensor(np.array([0.0, 1.0, 0.0]).reshape(1, 3, 1, 1))
        out = le_step(img, Tensor(np.full((1, 3, 1, 1), alpha)))
        np.testing.assert_array_equal(out.data, img.data)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            le_step(full(0.5), full(0.5, size=(4, 5)))

    def test_range_is_preserved(self):
        generator = np.random.default_rng(0)
        img = generator.uniform(0.0, 1.0, size=(1, 3, 100, 334))
        img[0, 0, 0, :2] = [0.0, 1.0]
        maps = generator.uniform(-1.0, 1.0, size=(1, 24, 100, 334))
        maps[0, :, 0, 2:4] = [-1.0, 1.0]
        out = apply_curves(Tensor(img), Tensor(maps), 8).data
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_monotone_in_intensity(self, float64):
        values = np.linspace(0.0, 1.0, 1001)
        for alpha in np.linspace(-1.0, 1.0, 21):
            img = Tensor(np.tile(values, (1, 3, 1, 1)))
            out = le_step(img, Tensor(np.full(img.shape, alpha))).data[0, 0, 0]
            assert np.all(np.diff(out) >= 0.0)

    def test_partials(self):
        d_img, d_alpha = curve_partials(np.array([0.5, 0.0]), np.array([1.0, -1.0]))
        np.testing.assert_allclose(d_img, [1.0, 0.0])
        np.testing.assert_allclose(d_alpha, [0.25, 0.0])


class TestApplyCurves:
    def test_single_iteration_equals_one_step(self, rng):
        img = Tensor(rng.uniform(size=(1, 3, 5, 5)))
        alpha = Tensor(rng.uniform(-1, 1, size=(1, 3, 5, 5)))
        np.testing.assert_array_equal(apply_curves(img, alpha, 1).data, le_step(img, alpha).data)

    def test_two_iterations_at_full_strength(self):
        out = apply_curves(full(0.5), full(1.0, channels=6), 2)
        np.testing.assert_allclose(out.data, 0.9375)

    def test_zero_maps_are_identity(self, rng):
        img = Tensor(rng.uniform(size=(2, 3, 6, 6)))
        out = apply_curves(img, Tensor(np.zeros((2, 24, 6, 6))), 8)
        np.testing.assert_array_equal(out.data, img.data)

    def test_wrong_channel_count(self):
        with pytest.raises(ShapeError):
            apply_curves(full(0.5), full(0.0, channels=23), 8)

    def test_mismatched_iteration_count(self):
        maps = CurveParamMaps(full(0.0, channels=6), 2)
        with pytest.raises(ValueError):
            apply_curves(full(0.5), maps, 3)

    def test_gradient_through_eight_iterations(self, float64, rng):
        img = Tensor(rng.uniform(0.05, 0.95, size=(1, 3, 4, 4)))
        maps = Tensor(rng.uniform(-0.9, 0.9, size=(1, 24, 4, 4)))
        weights = Tensor(rng.normal(size=(1, 3, 4, 4)))
        error = grad_check(lambda: (apply_curves(img, maps, 8) * weights).sum(), [img, maps])
        assert error < 1e-5


class TestApplyCurvesShared:
    def test_darkening_example(self):
        out = apply_curves_shared(full(0.5), full(-1.0), 2)
        np.testing.assert_allclose(out.data, 0.0625)

    def test_identity_with_zero_map(self, rng):
        img = Tensor(rng.uniform(size=(1, 3, 5, 5)))
        np.testing.assert_array_equal(apply_curves_shared(img, full(0.0, size=(5, 5)), 8).data, img.data)

    def test_equals_tiled_per_iteration_maps(self, rng):
        img = Tensor(rng.uniform(size=(1, 3, 6, 4)))
        shared = CurveParamMaps(Tensor(rng.uniform(-1, 1, size=(1, 3, 6, 4))), 8, shared=True)
        tiled = shared.tiled()
        assert tiled.maps.shape == (1, 24, 6, 4)
        np.testing.assert_array_equal(apply_curves_shared(img, shared).data, apply_curves(img, tiled).data)

    def test_gradient_sums_over_iterations(self, float64, rng):
        img = Tensor(rng.uniform(0.05, 0.95, size=(1, 3, 3, 3)))
        shared = Tensor(rng.uniform(-0.9, 0.9, size=(1, 3, 3, 3)))
        error = grad_check(lambda: apply_curves_shared(img, shared, 8).sum(), [img, shared])
        assert error < 1e-5

    def test_needs_iteration_count_for_bare_tensor(self):
        with pytest.raises(ValueError):
            apply_curves_shared(full(0.5), full(0.0))

    def test_dispatch(self, rng):
        img = Tensor(rng.uniform(size=(1, 3, 4, 4)))
        shared = CurveParamMaps(Tensor(rng.uniform(-1, 1, size=(1, 3, 4, 4))), 3, shared=True)
        np.testing.assert_array_equal(apply_curve_maps(img, shared).data, apply_curves_shared(img, shared).data)


class TestCurveParamMaps:
    def test_groups_and_slices(self, rng):
        maps = CurveParamMaps(Tensor(rng.uniform(-1, 1, size=(1, 24, 3, 3))), 8)
        assert maps.groups == 8
        np.testing.assert_array_equal(maps.group(2).data, maps.maps.data[:, 6:9])
        with pytest.raises(IndexError):
            maps.group(8)

    def test_shared_has_one_group(self):
        assert CurveParamMaps(full(0.0), 8, shared=True).groups == 1

    def test_resized(self, rng):
        maps = CurveParamMaps(Tensor(rng.uniform(-1, 1, size=(1, 3, 2, 3))), 4, shared=True)
        assert maps.resized(12, 18).spatial_size == (12, 18)
        assert maps.resized(2, 3) is maps


class TestRangeChecks:
    @pytest.fixture(autouse=True)
    def enabled(self):
        previous = set_range_checks(True)
        yield
        set_range_checks(previous)

    def test_image_out_of_range(self):
        with pytest.raises(CurveRangeError):
            le_step(full(1.5), full(0.0))

    def test_map_out_of_range(self):
        with pytest.raises(CurveRangeError):
            CurveParamMaps(full(1.2), 1)

    def test_valid_inputs_pass(self):
        le_step(full(0.5), full(-1.0))
