import numpy as np
import pytest

from conftest import random_tf_inputs, tiny_bundle
from volgen.nets import UntrainedModelError
from volgen.sensitivity import (Region, _forward_color, mask_region,
                                region_sensitivity, scalar_value_field,
                                smooth_field)
from volgen.tensor import Tensor


def fd_bundle():
    """64-bit bundle with boosted weights so gradients clear the FD floor."""
    return tiny_bundle(seed=3, weight_std=0.3, dtype=np.float64)


def norm_over(bundle, view, t_o, t_c, mask) -> float:
    """Region norm through the same 64-bit forward pass the gradient uses.

    `synthesize` is unsuitable as the FD side: it casts inputs to float32,
    which swallows a 1e-6 perturbation."""
    color = _forward_color(bundle, view[None],
                           Tensor(t_o.astype(np.float64)[None]), t_c[None])
    return float(np.sqrt((color.data[0] ** 2 * mask).sum()))


class TestRegion:
    def test_validate_bounds(self):
        Region(0, 0, 16, 16).validate(16, 16)
        with pytest.raises(ValueError):
            Region(0, 0, 17, 16).validate(16, 16)
        with pytest.raises(ValueError):
            Region(4, 4, 4, 8).validate(16, 16)     # empty
        with pytest.raises(ValueError):
            Region(-1, 0, 4, 4).validate(16, 16)

    def test_mask_contents(self):
        m = Region(1, 2, 3, 4).mask(8, 8)
        assert m.sum() == 4.0
        assert m[2, 1] == 1.0 and m[2, 2] == 1.0
        assert m[1, 1] == 0.0 and m[2, 3] == 0.0

    def test_explicit_mask_coerced(self):
        m = mask_region(np.array([[0, 2], [0.5, 0]]))
        assert set(np.unique(m)) == {0.0, 1.0}
        with pytest.raises(ValueError):
            mask_region(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            mask_region(np.ones(16))


class TestRegionSensitivity:
    def test_untrained_guard(self):
        bundle = tiny_bundle()
        bundle.translation_trained = False
        with pytest.raises(UntrainedModelError):
            region_sensitivity(bundle, np.zeros(5), np.zeros(256),
                               np.zeros((3, 256)), Region(0, 0, 4, 4))

    def test_shape_and_dtype(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        sigma = region_sensitivity(bundle, view, t_o, t_c,
                                   Region(0, 0, 16, 16))
        assert sigma.shape == (256,)
        assert np.all(np.isfinite(sigma))

    def test_finite_difference_oracle(self, rng):
        bundle = fd_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        region = Region(2, 2, 10, 12)
        sigma = region_sensitivity(bundle, view, t_o, t_c, region)
        mask = region.mask(16, 16)
        delta = 1e-6
        fd = np.empty(256)
        for k in range(0, 256, 16):     # spot-check every 16th entry
            hi, lo = t_o.copy(), t_o.copy()
            hi[k] += delta
            lo[k] -= delta
            fd[k] = (norm_over(bundle, view, hi, t_c, mask)
                     - norm_over(bundle, view, lo, t_c, mask)) / (2 * delta)
        ks = np.arange(0, 256, 16)
        scale = max(np.abs(sigma[ks]).max(), 1e-12)
        assert np.abs(fd[ks] - sigma[ks]).max() / scale < 1e-3

    def test_mask_and_rect_agree(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        region = Region(0, 4, 8, 12)
        a = region_sensitivity(bundle, view, t_o, t_c, region)
        b = region_sensitivity(bundle, view, t_o, t_c, region.mask(16, 16))
        assert np.allclose(a, b)

    def test_squared_mode_additive_over_partition(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        whole = region_sensitivity(bundle, view, t_o, t_c,
                                   Region(0, 0, 16, 16), squared=True)
        parts = sum(
            region_sensitivity(bundle, view, t_o, t_c,
                               Region(x, y, x + 8, y + 8), squared=True)
            for x in (0, 8) for y in (0, 8))
        assert np.allclose(whole, parts, atol=1e-4)


class TestScalarValueField:
    def test_shape_and_grid_check(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        field = scalar_value_field(bundle, view, t_o, t_c, r=4)
        assert field.shape == (256, 4, 4)
        with pytest.raises(ValueError):
            scalar_value_field(bundle, view, t_o, t_c, r=5)

    def test_batched_equals_sequential(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        batched = scalar_value_field(bundle, view, t_o, t_c, r=4, batch=16)
        seq = scalar_value_field(bundle, view, t_o, t_c, r=4, batch=1)
        assert np.abs(batched - seq).max() < 1e-6

    def test_blocks_match_region_calls(self, rng):
        bundle = tiny_bundle()
        view, t_o, t_c = random_tf_inputs(rng)
        field = scalar_value_field(bundle, view, t_o, t_c, r=2)
        for by in range(2):
            for bx in range(2):
                sigma = region_sensitivity(
                    bundle, view, t_o, t_c,
                    Region(bx * 8, by * 8, bx * 8 + 8, by * 8 + 8))
                assert np.allclose(field[:, by, bx], sigma, atol=1e-5)


class TestSmoothField:
    def test_weights_normalized_and_centered(self):
        field = np.random.default_rng(0).random((256, 4, 4))
        out, w = smooth_field(field, center=100, bandwidth=8.0)
        assert out.shape == (4, 4)
        assert w.shape == (256,)
        assert w.sum() == pytest.approx(1.0)
        assert w.argmax() == 100

    def test_constant_field_unchanged(self):
        field = np.full((256, 3, 3), 2.5)
        out, _ = smooth_field(field, center=40)
        assert np.allclose(out, 2.5)

    def test_narrow_bandwidth_selects_center(self):
        field = np.zeros((256, 2, 2))
        field[7] = 1.0
        out, _ = smooth_field(field, center=7, bandwidth=1e-3)
        assert np.allclose(out, 1.0)

    def test_validation(self):
        field = np.zeros((256, 2, 2))
        with pytest.raises(ValueError):
            smooth_field(field, center=256)
        with pytest.raises(ValueError):
            smooth_field(field, center=0, bandwidth=0.0)
