import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layeract import InvalidInput, Rng, ShapeError, layer_stats, matvec_t, rng_normal

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


class TestLayerStats:
    def test_small_vector(self):
        mean, var = layer_stats([1.0, 2.0, 3.0])
        assert mean == pytest.approx(2.0, abs=1e-15)
        assert var == pytest.approx(2.0 / 3.0, abs=1e-15)

    def test_constant_vector(self):
        mean, var = layer_stats([4.2] * 7)
        assert mean == pytest.approx(4.2)
        assert var == 0.0

    def test_symmetric_pair(self):
        assert layer_stats([1.0, -1.0]) == (0.0, 1.0)

    def test_population_divisor(self):
        # divisor d, not d-1
        _, var = layer_stats([0.0, 2.0])
        assert var == pytest.approx(1.0, abs=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInput):
            layer_stats([1.0, np.nan])
        with pytest.raises(InvalidInput):
            layer_stats([np.inf, 0.0])

    def test_empty_rejected(self):
        with pytest.raises(InvalidInput):
            layer_stats([])

    @given(st.lists(finite_floats, min_size=1, max_size=64))
    @settings(deadline=None)
    def test_variance_nonnegative(self, values):
        _, var = layer_stats(values)
        assert var >= 0.0

    @given(st.lists(finite_floats, min_size=1, max_size=64))
    @settings(deadline=None)
    def test_variance_zero_iff_constant(self, values):
        arr = np.asarray(values)
        _, var = layer_stats(values)
        d = arr.size
        eps = np.finfo(np.float64).eps
        scale = max(1.0, float(np.max(np.abs(arr))) ** 2)
        if np.all(arr == arr[0]):
            assert var <= 16 * d * eps * scale
        elif var == 0.0:
            # accumulation may hide sub-eps spreads, nothing more
            assert np.ptp(arr) <= 16 * d * eps * max(1.0, float(np.max(np.abs(arr))))


class TestMatvecT:
    def test_identity(self):
        np.testing.assert_array_equal(matvec_t(np.eye(2), [3.0, 4.0]), [3.0, 4.0])

    def test_diagonal(self):
        np.testing.assert_array_equal(
            matvec_t([[1.0, 0.0], [0.0, 2.0]], [1.0, 1.0]), [1.0, 2.0]
        )

    def test_zero_matrix(self):
        np.testing.assert_array_equal(
            matvec_t(np.zeros((2, 3)), [5.0, 7.0]), [0.0, 0.0, 0.0]
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matvec_t(np.zeros((2, 3)), [1.0, 2.0, 3.0])

    def test_linearity(self):
        gen = np.random.default_rng(42)
        eps = np.finfo(np.float64).eps
        for _ in range(50):
            r, d = gen.integers(1, 12, size=2)
            W = gen.normal(0, 1, (r, d))
            x, z = gen.normal(0, 1, (2, r))
            a, b = gen.normal(0, 2, 2)
            lhs = matvec_t(W, a * x + b * z)
            rhs = a * matvec_t(W, x) + b * matvec_t(W, z)
            bound = 8 * eps * (np.abs(a * x) + np.abs(b * z)) @ np.abs(W) + 8 * eps
            assert np.all(np.abs(lhs - rhs) <= bound)


class TestRng:
    def test_degenerate_normal(self):
        draws = rng_normal(Rng(0), 0.1, 0.0, 3)
        np.testing.assert_array_equal(draws, [0.1, 0.1, 0.1])

    def test_determinism(self):
        a = rng_normal(Rng(123), 0.0, 1.0, 100)
        b = rng_normal(Rng(123), 0.0, 1.0, 100)
        np.testing.assert_array_equal(a, b)

    def test_sample_variance(self):
        draws = rng_normal(Rng(7), 0.0, 1.0, 10**5)
        assert 0.97 <= draws.var() <= 1.03

    def test_sample_mean_within_confidence(self):
        n = 10**4
        draws = rng_normal(Rng(11), 2.5, 0.3, n)
        assert abs(draws.mean() - 2.5) <= 5 * 0.3 / np.sqrt(n)

    def test_negative_std_rejected(self):
        with pytest.raises(InvalidInput):
            rng_normal(Rng(0), 0.0, -1.0, 4)

    def test_substreams_differ_and_reproduce(self):
        a1 = Rng(5).substream(1).normal(0, 1, 8)
        a2 = Rng(5).substream(1).normal(0, 1, 8)
        b = Rng(5).substream(2).normal(0, 1, 8)
        np.testing.assert_array_equal(a1, a2)
        assert not np.array_equal(a1, b)
