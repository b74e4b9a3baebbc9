import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crpslearn.grid import ProbGrid
from crpslearn.loss import crps_grid, linearized_instant_regret, pinball, pinball_subgrad

reals = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)
probs = st.floats(min_value=1e-6, max_value=1 - 1e-6)


class TestPinball:
    @pytest.mark.parametrize("q, y, p, expected", [
        (0.0, 0.0, 0.3, 0.0),
        (0.0, 1.0, 0.5, 0.5),
        (2.0, 0.0, 0.1, 1.8),
    ])
    def test_examples(self, q, y, p, expected):
        assert pinball(q, y, p) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_bad_probability(self, p):
        with pytest.raises(ValueError):
            pinball(0.0, 1.0, p)
        with pytest.raises(ValueError):
            pinball_subgrad(0.0, 1.0, p)

    @given(reals, reals, probs)
    def test_nonnegative_zero_iff_equal(self, q, y, p):
        v = pinball(q, y, p)
        assert v >= 0.0
        if q == y:
            assert v == 0.0
        elif abs(q - y) > 1e-300:  # subnormal gaps may underflow
            assert v > 0.0

    @given(reals, reals, reals, probs, st.floats(0, 1))
    def test_convex(self, q1, q2, y, p, lam):
        mid = pinball(lam * q1 + (1 - lam) * q2, y, p)
        assert mid <= lam * pinball(q1, y, p) + (1 - lam) * pinball(q2, y, p) + 1e-9

    @given(reals, reals, reals, probs)
    def test_subgradient_inequality(self, q1, q2, y, p):
        lhs = pinball(q2, y, p)
        rhs = pinball(q1, y, p) + pinball_subgrad(q1, y, p) * (q2 - q1)
        assert lhs >= rhs - 1e-9 * (1 + abs(q1) + abs(q2) + abs(y))

    @given(reals, reals)
    def test_median_is_half_absolute(self, q, y):
        assert pinball(q, y, 0.5) == pytest.approx(abs(q - y) / 2, abs=1e-12)

    def test_broadcasts(self):
        out = pinball(np.array([0.0, 1.0]), 0.5, np.array([0.25, 0.75]))
        np.testing.assert_allclose(out, [0.125, 0.125])


class TestSubgradient:
    @pytest.mark.parametrize("q, y, p, expected", [
        (1.0, 0.0, 0.5, 0.5),
        (0.0, 1.0, 0.5, -0.5),
        (1.0, 1.0, 0.3, -0.3),
    ])
    def test_examples(self, q, y, p, expected):
        assert pinball_subgrad(q, y, p) == pytest.approx(expected)


class TestCrpsGrid:
    def test_perfect(self, percentiles):
        assert crps_grid(np.full(99, 1.7), 1.7, percentiles) == 0.0

    def test_standard_normal(self, percentiles):
        from scipy.stats import norm

        q = norm.ppf(percentiles.probs)
        assert crps_grid(q, 0.0, percentiles) == pytest.approx(0.2337, abs=0.01)

    def test_single_point(self):
        assert crps_grid([1.0], 0.0, ProbGrid([0.5])) == 1.0

    def test_length_mismatch(self, percentiles):
        with pytest.raises(ValueError, match="does not match"):
            crps_grid(np.zeros(98), 0.0, percentiles)

    def test_batch(self, rng, percentiles):
        q = np.sort(rng.normal(size=(4, 99)), axis=1)
        y = rng.normal(size=4)
        np.testing.assert_allclose(crps_grid(q, y, percentiles),
                                   [crps_grid(q[i], y[i], percentiles) for i in range(4)], rtol=0, atol=0)

    @given(st.lists(reals, min_size=5, max_size=5), reals, st.floats(-100, 100))
    def test_shift_invariant(self, q, y, c):
        g = ProbGrid.equidistant(5)
        q = np.sort(q)
        assert crps_grid(q + c, y + c, g) == pytest.approx(crps_grid(q, y, g), rel=1e-9, abs=1e-9)


class TestLinearizedRegret:
    def test_identical_experts_zero(self, rng):
        g = ProbGrid.equidistant(4)
        c = np.sort(rng.normal(size=4))
        out = linearized_instant_regret(c, np.column_stack([c, c]), 0.3, g)
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_examples(self):
        g = ProbGrid([0.5])
        assert linearized_instant_regret([1.0], [[0.0]], 0.0, g)[0, 0] == 0.5
        assert linearized_instant_regret([0.0], [[1.0]], 0.5, g)[0, 0] == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            linearized_instant_regret([0.0, 1.0], [[0.0, 1.0]], 0.0, ProbGrid([0.25, 0.75]))

    def test_equals_linearized_loss_difference(self, rng):
        g = ProbGrid.equidistant(9)
        x = rng.normal(size=(9, 3))
        c = np.sort(x.mean(axis=1))
        y = 0.2
        grad = pinball_subgrad(c, y, g.probs)
        expected = grad[:, None] * c[:, None] - grad[:, None] * x
        np.testing.assert_allclose(linearized_instant_regret(c, x, y, g), expected, atol=1e-15)
