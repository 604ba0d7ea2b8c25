import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arclearn.geometry import (
    AnalyticSine,
    Isometry,
    analytic_length,
    apply_isometry,
    as_curve,
    cumulative_lengths,
    discretization_error,
    polyline_length,
    sample,
    split_at,
)

TWO_PI = 2.0 * math.pi

# Chord sum of the unit sine over a full period with 10^6 segments;
# frozen from the independent brute-force oracle in test_oracle_agreement.
UNIT_SINE_LENGTH = 7.640395578055423


def brute_force_length(sine: AnalyticSine, segments: int = 1_000_000) -> float:
    p = np.linspace(sine.p_lo, sine.p_hi, segments + 1)
    x = p
    y = sine.amplitude * np.sin(p + sine.phase)
    return float(np.hypot(np.diff(x), np.diff(y)).sum())


class TestSample:
    def test_zero_amplitude_is_straight_segment(self):
        sine = AnalyticSine(amplitude=0.0, phase=0.0, p_lo=0.0, p_hi=1.0)
        pts = sample(sine, 2)
        np.testing.assert_allclose(pts, [[0.0, 1.0], [0.0, 0.0]], atol=0)

    def test_phase_shift(self):
        sine = AnalyticSine(amplitude=1.0, phase=math.pi / 2, p_lo=0.0, p_hi=0.5)
        pts = sample(sine, 2)
        np.testing.assert_allclose(pts[:, 0], [0.0, 1.0], atol=1e-15)

    def test_isometry_applied_pointwise(self):
        iso = Isometry(angle=math.pi / 2, tx=1.0, ty=1.0)
        sine = AnalyticSine(amplitude=1.0, phase=0.0, isometry=iso, p_lo=0.0, p_hi=math.pi)
        pts = sample(sine, 3)
        # midpoint (pi/2, 1) rotates to (-1, pi/2), then translates
        np.testing.assert_allclose(pts[:, 1], [0.0, 1.0 + math.pi / 2], atol=1e-12)

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            sample(AnalyticSine(), 1)

    def test_negative_amplitude_canonicalized(self):
        a = AnalyticSine(amplitude=-1.5, phase=0.25)
        b = AnalyticSine(amplitude=1.5, phase=0.25 + math.pi)
        np.testing.assert_allclose(sample(a, 17), sample(b, 17), atol=1e-15)
        assert a.amplitude == 1.5


class TestPolylineLength:
    def test_345_triangle(self):
        assert polyline_length([[0.0, 3.0], [0.0, 4.0]]) == 5.0

    def test_collinear_additivity(self):
        assert polyline_length([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]]) == 2.0

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            polyline_length([[0.0], [1.0]])
        with pytest.raises(ValueError):
            polyline_length([[0.0, np.nan], [0.0, 1.0]])


class TestAnalyticLength:
    def test_zero_amplitude_gives_interval_length(self):
        sine = AnalyticSine(amplitude=0.0, phase=1.0, p_lo=0.0, p_hi=10.0)
        assert analytic_length(sine) == pytest.approx(10.0, abs=1e-10)

    def test_unit_sine_full_period(self):
        sine = AnalyticSine(amplitude=1.0, phase=0.0, p_lo=0.0, p_hi=TWO_PI)
        assert analytic_length(sine) == pytest.approx(UNIT_SINE_LENGTH, abs=1e-8)

    def test_isometry_invariance(self):
        iso = Isometry(angle=1.3, tx=5.0, ty=-2.0)
        plain = AnalyticSine(amplitude=1.0, phase=0.0, p_lo=0.0, p_hi=TWO_PI)
        moved = AnalyticSine(amplitude=1.0, phase=0.0, isometry=iso, p_lo=0.0, p_hi=TWO_PI)
        assert analytic_length(moved) == analytic_length(plain)

    def test_sub_interval_bounds_checked(self):
        sine = AnalyticSine(p_lo=0.0, p_hi=1.0)
        with pytest.raises(ValueError):
            analytic_length(sine, -0.1, 0.5)
        with pytest.raises(ValueError):
            analytic_length(sine, 0.5, 1.5)


class TestOracleAgreement:
    def test_unit_sine_vs_brute_force(self):
        sine = AnalyticSine(amplitude=1.0, phase=0.0, p_lo=0.0, p_hi=TWO_PI)
        chord = brute_force_length(sine)
        quad = analytic_length(sine)
        assert abs(quad - chord) / chord < 1e-6
        assert chord == pytest.approx(UNIT_SINE_LENGTH, abs=1e-9)

    def test_random_sines_chord_vs_quadrature(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sine = AnalyticSine(
                amplitude=rng.uniform(0.5, 2.0),
                phase=rng.uniform(0, TWO_PI),
                p_lo=0.0,
                p_hi=rng.uniform(math.pi, 4 * math.pi),
            )
            chord = brute_force_length(sine, segments=1_000_000)
            quad = analytic_length(sine)
            assert abs(quad - chord) / chord < 1e-6


class TestDiscretizationError:
    def test_straight_line_is_exact(self):
        sine = AnalyticSine(amplitude=0.0, p_lo=0.0, p_hi=5.0)
        for n in (2, 10, 100):
            assert discretization_error(sine, n) == pytest.approx(0.0, abs=1e-9)

    def test_two_point_sample_of_unit_sine(self):
        sine = AnalyticSine(amplitude=1.0, phase=0.0, p_lo=0.0, p_hi=TWO_PI)
        err = discretization_error(sine, 2)
        assert err == pytest.approx(UNIT_SINE_LENGTH - TWO_PI, abs=1e-8)

    def test_second_order_decay(self):
        sine = AnalyticSine(amplitude=1.0, phase=0.0, p_lo=0.0, p_hi=TWO_PI)
        e200 = discretization_error(sine, 200)
        e400 = discretization_error(sine, 400)
        assert e200 > 0 and e400 > 0
        assert 3.5 <= e200 / e400 <= 4.5


class TestApplyIsometry:
    def test_identity(self):
        pts = np.array([[0.0, 1.0], [2.0, 3.0]])
        np.testing.assert_array_equal(apply_isometry(pts, Isometry()), pts)

    def test_quarter_turn(self):
        pts = np.array([[1.0, 2.0], [0.0, 0.0]])
        out = apply_isometry(pts, Isometry(angle=math.pi / 2))
        np.testing.assert_allclose(out, [[0.0, 0.0], [1.0, 2.0]], atol=1e-12)

    def test_translation_preserves_length(self):
        pts = np.array([[0.0, 3.0], [0.0, 4.0]])
        out = apply_isometry(pts, Isometry(tx=1.0, ty=1.0))
        np.testing.assert_allclose(out, [[1.0, 4.0], [1.0, 5.0]])
        assert polyline_length(out) == pytest.approx(5.0, abs=1e-12)

    def test_rotation_matrix_is_special_orthogonal(self):
        for angle in (0.0, 0.4, -2.0, 9.9):
            r = Isometry(angle=angle).matrix()
            np.testing.assert_allclose(r @ r.T, np.eye(2), atol=1e-12)
            assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


class TestSplitAt:
    def test_three_points(self):
        left, right = split_at([[0.0, 1.0, 2.0], [0.0, 0.0, 0.0]], 1)
        np.testing.assert_array_equal(left, [[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(right, [[1.0, 2.0], [0.0, 0.0]])
        assert polyline_length(left) + polyline_length(right) == 2.0

    def test_shared_chord_identity(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(2, 200))
        left, right = split_at(pts, 100)
        total = polyline_length(pts)
        assert abs(polyline_length(left) + polyline_length(right) - total) <= 1e-12 * max(
            1.0, total
        )

    def test_bad_indices_rejected(self):
        pts = np.zeros((2, 5))
        for index in (0, 4, -1, 5):
            with pytest.raises(ValueError):
                split_at(pts, index)


finite_floats = st.floats(min_value=-50, max_value=50, allow_nan=False)


class TestInvariantProperties:
    @given(
        st.lists(st.tuples(finite_floats, finite_floats), min_size=2, max_size=40)
    )
    def test_nonnegativity(self, points):
        pts = np.array(points).T
        assert polyline_length(pts) >= 0.0

    def test_zero_length_iff_coincident(self):
        pts = np.full((2, 7), 3.25)
        assert polyline_length(pts) == 0.0

    @given(
        st.lists(st.tuples(finite_floats, finite_floats), min_size=2, max_size=30),
        st.floats(min_value=-math.pi, max_value=math.pi),
        finite_floats,
        finite_floats,
    )
    @settings(max_examples=60)
    def test_isometry_invariance_of_chord_length(self, points, angle, tx, ty):
        pts = np.array(points).T
        length = polyline_length(pts)
        moved = apply_isometry(pts, Isometry(angle, tx, ty))
        assert abs(polyline_length(moved) - length) <= 1e-9 * (1.0 + length)

    @given(st.data())
    @settings(max_examples=60)
    def test_split_additivity_exact(self, data):
        n = data.draw(st.integers(min_value=3, max_value=50))
        seed = data.draw(st.integers(min_value=0, max_value=2**31))
        index = data.draw(st.integers(min_value=1, max_value=n - 2))
        pts = np.random.default_rng(seed).uniform(-10, 10, size=(2, n))
        left, right = split_at(pts, index)
        total = polyline_length(pts)
        assert abs(polyline_length(left) + polyline_length(right) - total) <= 1e-12 * (
            1.0 + total
        )

    @given(st.data())
    @settings(max_examples=60)
    def test_monotonicity_of_subcurves(self, data):
        n = data.draw(st.integers(min_value=2, max_value=60))
        seed = data.draw(st.integers(min_value=0, max_value=2**31))
        pts = np.random.default_rng(seed).uniform(-10, 10, size=(2, n))
        i = data.draw(st.integers(min_value=0, max_value=n - 2))
        j = data.draw(st.integers(min_value=i + 1, max_value=n - 1))
        total = polyline_length(pts)
        sub = polyline_length(pts[:, i : j + 1])
        assert sub <= total + 1e-12 * (1.0 + total)

    def test_cumulative_lengths_monotone(self):
        rng = np.random.default_rng(11)
        pts = rng.normal(size=(2, 500))
        cum = cumulative_lengths(pts)
        assert cum[0] == 0.0
        assert np.all(np.diff(cum) >= 0)
        assert cum[-1] == pytest.approx(polyline_length(pts), rel=1e-12)

    def test_convergence_over_random_sines(self):
        # error halves the spacing -> roughly quarters the error
        rng = np.random.default_rng(5)
        ns = [25, 50, 100, 200, 400, 800]
        for _ in range(10):
            sine = AnalyticSine(
                amplitude=rng.uniform(0.5, 2.0),
                phase=rng.uniform(0, TWO_PI),
                p_lo=0.0,
                p_hi=rng.uniform(math.pi, 4 * math.pi),
            )
            errors = [discretization_error(sine, n) for n in ns]
            assert all(a >= b for a, b in zip(errors, errors[1:]))
            for a, b in zip(errors, errors[1:]):
                assert 3.0 <= a / b <= 5.0


class TestAsCurve:
    def test_accepts_lists(self):
        out = as_curve([[0, 1], [2, 3]])
        assert out.dtype == np.float64 and out.shape == (2, 2)

    def test_rejects_transposed(self):
        with pytest.raises(ValueError):
            as_curve(np.zeros((5, 2)))
