import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volgen.color import (lab_to_linear_rgb, linear_rgb_to_lab,
                          linear_to_srgb, srgb_to_linear)


class TestLabConversions:
    def test_white_point(self):
        rgb = lab_to_linear_rgb(np.array([100.0, 0.0, 0.0]))
        assert np.allclose(rgb, 1.0, atol=1e-4)

    def test_black(self):
        rgb = lab_to_linear_rgb(np.array([0.0, 0.0, 0.0]))
        assert np.allclose(rgb, 0.0, atol=1e-4)

    def test_mid_gray_is_neutral(self):
        rgb = lab_to_linear_rgb(np.array([50.0, 0.0, 0.0]))
        assert np.allclose(rgb, rgb[0], atol=1e-5)
        assert 0.1 < rgb[0] < 0.3      # L=50 ~ 18.4% linear luminance

    def test_round_trip_in_gamut(self, rng):
        rgb = rng.uniform(0.05, 0.95, size=(64, 3))
        back = lab_to_linear_rgb(linear_rgb_to_lab(rgb))
        assert np.allclose(back, rgb, atol=1e-6)

    def test_out_of_gamut_clamped(self):
        rgb = lab_to_linear_rgb(np.array([50.0, 110.0, -110.0]))
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0


class TestSrgbEncoding:
    def test_round_trip(self, rng):
        c = rng.random((100,))
        assert np.allclose(srgb_to_linear(linear_to_srgb(c)), c, atol=1e-9)

    def test_endpoints(self):
        assert linear_to_srgb(np.array(0.0)) == 0.0
        assert linear_to_srgb(np.array(1.0)) == pytest.approx(1.0)

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(0, 1), y=st.floats(0, 1))
    def test_monotone(self, x, y):
        if x <= y:
            assert linear_to_srgb(np.array(x)) <= linear_to_srgb(np.array(y))
