import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionforge.diffcore import forward_noise, make_schedule
from motionforge.errors import ShapeMismatchError, UserInputError


class TestMakeSchedule:
    def test_single_step(self):
        s = make_schedule(1, 0.1, 0.1)
        assert s.alpha_bar(1) == pytest.approx(0.9, rel=1e-15)

    def test_thousand_step_product(self):
        # pinned from a 50-digit extended-precision recomputation of the
        # running product for the linear 1e-4 -> 0.02 ramp
        s = make_schedule(1000, 1e-4, 0.02)
        assert s.alpha_bar(1000) == pytest.approx(4.0358297653756833e-05, rel=1e-12)

    def test_strictly_decreasing(self):
        s = make_schedule(120, 1e-4, 0.05)
        assert np.all(np.diff(s.alpha_bars) < 0)

    @given(st.integers(1, 200), st.floats(1e-5, 0.1), st.floats(0.1, 0.5))
    @settings(max_examples=30, deadline=None)
    def test_product_identity_property(self, steps, beta_start, beta_end):
        s = make_schedule(steps, beta_start, beta_end)
        expected = np.cumprod(1.0 - s.betas)
        assert np.allclose(s.alpha_bars, expected, rtol=1e-12, atol=0)
        assert np.all(s.betas > 0) and np.all(s.betas < 1)

    @pytest.mark.parametrize(
        "steps,start,end",
        [(0, 0.1, 0.2), (10, 0.0, 0.2), (10, 0.3, 0.2), (10, 0.1, 1.0), (10, -0.1, 0.2)],
    )
    def test_invalid_ranges(self, steps, start, end):
        with pytest.raises(UserInputError):
            make_schedule(steps, start, end)

    def test_alpha_bar_zero_is_one(self):
        s = make_schedule(10, 0.01, 0.1)
        assert s.alpha_bar(0) == 1.0

    def test_timestep_bounds(self):
        s = make_schedule(10, 0.01, 0.1)
        with pytest.raises(UserInputError):
            s.beta(0)
        with pytest.raises(UserInputError):
            s.alpha_bar(11)


class TestForwardNoise:
    def setup_method(self):
        self.s = make_schedule(50, 1e-4, 0.02)

    def test_zero_noise(self):
        z0 = np.random.default_rng(0).random((2, 1, 4, 4)).astype(np.float32)
        out = forward_noise(z0, 7, np.zeros_like(z0), self.s)
        assert np.allclose(out, np.sqrt(self.s.alpha_bar(7)) * z0, rtol=1e-6)

    def test_near_identity_at_tiny_beta(self):
        s = make_schedule(1, 1e-5, 1e-5)
        z0 = np.ones((3, 3), dtype=np.float32)
        out = forward_noise(z0, 1, np.zeros_like(z0), s)
        assert np.allclose(out, z0, atol=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            forward_noise(np.zeros((2, 2)), 1, np.zeros((3, 2)), self.s)

    def test_t_out_of_range(self):
        z = np.zeros((2, 2))
        with pytest.raises(UserInputError):
            forward_noise(z, 0, z, self.s)
        with pytest.raises(UserInputError):
            forward_noise(z, 51, z, self.s)

    def test_joint_linearity(self):
        rng = np.random.default_rng(1)
        z0, eps = rng.random((4, 4)), rng.standard_normal((4, 4))
        a = forward_noise(z0, 20, eps, self.s)
        b = forward_noise(3.0 * z0, 20, 3.0 * eps, self.s)
        assert np.allclose(b, 3.0 * a, rtol=1e-9)

    def test_monte_carlo_statistics(self):
        # quick version of the acceptance check: mean ~ sqrt(abar), var ~ 1-abar
        rng = np.random.default_rng(2)
        z0 = np.ones((16, 16))
        t = 25
        draws = np.stack(
            [forward_noise(z0, t, rng.standard_normal((16, 16)), self.s) for _ in range(2000)]
        )
        a_bar = self.s.alpha_bar(t)
        assert draws.mean() == pytest.approx(np.sqrt(a_bar), rel=0.01)
        assert draws.var() == pytest.approx(1.0 - a_bar, rel=0.05)
