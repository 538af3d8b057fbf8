"""Tests for coefficient profiles (src/coefficients.py)."""

import math

import numpy as np
import pytest

from src.coefficients import (
    ProfileKind,
    asymptotic_profiles,
    blend,
    derivative,
    ellipticity_bounds,
    evaluate,
    exp_decay,
    matrix_diag_2d,
    periodic,
    power,
    profile_digest,
    profile_from_spec,
    rational_bump,
    tabulated,
    translate,
    uniform,
)
from src.errors import AnalyticDerivativeError, ArgumentError, ConfigError, DomainError, UnsupportedError


class TestEvaluate:
    def test_exp_decay_at_zero(self):
        assert float(evaluate(exp_decay(2), 0.0)) == pytest.approx(1.0)

    def test_exp_decay_at_one(self):
        assert float(evaluate(exp_decay(2), 1.0)) == pytest.approx(math.exp(-2), rel=1e-12)

    def test_power_at_four(self):
        assert float(evaluate(power(1), 4.0)) == pytest.approx(4.0)

    def test_power_rejects_origin(self):
        with pytest.raises(DomainError):
            evaluate(power(1), 0.0)

    def test_tabulated_outside_samples(self):
        profile = tabulated([0.0, 1.0, 2.0], [1.0, 2.0, 1.5])
        with pytest.raises(DomainError):
            evaluate(profile, 3.0)

    def test_arrays_keep_shape(self):
        values = evaluate(periodic(2, 1, 2 * math.pi), np.zeros((3, 4)))
        assert values.shape == (3, 4)
        assert np.allclose(values, 2.0)

    def test_matrix_profile_is_spd(self):
        profile = matrix_diag_2d(1.0, 3.0, theta=0.4, amp=0.5)
        a = evaluate(profile, np.array([[0.3, -0.2]]))[0]
        assert np.allclose(a, a.T)
        assert np.all(np.linalg.eigvalsh(a) > 0)


class TestConstructors:
    def test_negative_uniform_rejected(self):
        with pytest.raises(ArgumentError):
            uniform(-1)

    def test_uniform_zero_is_degenerate(self):
        assert uniform(0.0).degenerate

    def test_periodic_needs_positive_minimum(self):
        with pytest.raises(ArgumentError, match="mean > \\|amp\\|"):
            periodic(1, 1, 1)

    def test_power_exponent_range(self):
        with pytest.raises(ArgumentError):
            power(2.5)

    def test_tabulated_needs_increasing_samples(self):
        with pytest.raises(ArgumentError):
            tabulated([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])

    def test_profiles_hash_by_value(self):
        assert {uniform(1), uniform(1.0)} == {uniform(1)}


class TestEllipticityBounds:
    def test_uniform(self):
        b = ellipticity_bounds(uniform(1), (-5, 5))
        assert (b.lower, b.upper) == (1.0, 1.0)
        assert b.uniformly_elliptic

    def test_exp_decay_on_half_line_window(self):
        L = 3.0
        b = ellipticity_bounds(exp_decay(2), (0, L))
        assert b.lower == pytest.approx(math.exp(-2 * L))
        assert b.upper == pytest.approx(1.0)

    def test_rational_bump(self):
        L = 4.0
        b = ellipticity_bounds(rational_bump(), (-L, L))
        assert b.lower == pytest.approx(1 / (1 + L**2))
        assert b.upper == pytest.approx(1.0)

    def test_full_line_flags(self):
        b = ellipticity_bounds(exp_decay(2), (-math.inf, math.inf))
        assert b.lower_is_zero
        assert b.upper_is_infinite

    def test_bounds_contain_samples(self):
        profile = blend(1.0, 4.0, bump=0.5, bump_width=1.5)
        b = ellipticity_bounds(profile, (-3, 3))
        values = evaluate(profile, np.linspace(-3, 3, 2001))
        assert b.lower <= values.min() + 1e-12
        assert b.upper >= values.max() - 1e-12

    def test_reversed_window(self):
        with pytest.raises(ArgumentError):
            ellipticity_bounds(uniform(1), (1, -1))


class TestTranslate:
    def test_uniform_is_fixed(self):
        assert translate(uniform(1), 7) == uniform(1)

    def test_periodic_full_period(self):
        profile = periodic(2, 1, 2 * math.pi)
        x = np.linspace(-3, 3, 50)
        assert np.allclose(evaluate(translate(profile, 2 * math.pi), x), evaluate(profile, x))

    def test_rational_bump_at_origin(self):
        c = 3.0
        assert float(evaluate(translate(rational_bump(), c), 0.0)) == pytest.approx(1 / (1 + c**2))

    def test_domain_shifts(self):
        shifted = translate(power(1), 2.0)
        assert shifted.domain == ((-2.0, math.inf),)
        assert float(evaluate(shifted, -1.0)) == pytest.approx(1.0)


class TestAsymptoticProfiles:
    def test_blend_gives_both_ends(self):
        assert set(asymptotic_profiles(blend(1.0, 4.0))) == {uniform(1), uniform(4)}

    def test_uniform(self):
        assert asymptotic_profiles(uniform(3)) == [uniform(3)]

    def test_rational_bump_is_degenerate(self):
        limits = asymptotic_profiles(rational_bump())
        assert limits == [uniform(0.0)]
        assert limits[0].degenerate

    def test_periodic_orbit_is_itself(self):
        profile = periodic(2, 1, 2 * math.pi)
        assert asymptotic_profiles(translate(profile, 1.0)) == [profile]

    def test_tabulated_without_limits(self):
        with pytest.raises(UnsupportedError):
            asymptotic_profiles(tabulated([0.0, 1.0], [1.0, 2.0]))

    def test_tabulated_with_declared_limits(self):
        profile = tabulated([0.0, 1.0], [1.0, 2.0], limits=[uniform(1), uniform(2), uniform(1)])
        assert asymptotic_profiles(profile) == [uniform(1), uniform(2)]


class TestDerivative:
    @pytest.mark.parametrize(
        "profile",
        [exp_decay(2), power(0.5), periodic(2, 1, 3.0), rational_bump(1.5), blend(1.0, 4.0, bump=0.3)],
    )
    def test_matches_finite_differences(self, profile):
        x = np.linspace(0.5, 2.5, 7)
        h = 1e-4
        d1 = (evaluate(profile, x + h) - evaluate(profile, x - h)) / (2 * h)
        d2 = (evaluate(profile, x + h) - 2 * evaluate(profile, x) + evaluate(profile, x - h)) / h**2
        assert np.allclose(derivative(profile, x, 1), d1, rtol=1e-6, atol=1e-7)
        assert np.allclose(derivative(profile, x, 2), d2, rtol=1e-4, atol=1e-4)

    def test_tabulated_has_no_second_derivative(self):
        with pytest.raises(AnalyticDerivativeError):
            derivative(tabulated([0.0, 1.0, 2.0], [1.0, 2.0, 1.0]), 0.5, 2)

    def test_bad_order(self):
        with pytest.raises(ArgumentError):
            derivative(uniform(1), 0.0, 3)


class TestProfileFromSpec:
    def test_builds_each_kind(self):
        assert profile_from_spec({"kind": "ExpDecay", "params": [2]}) == exp_decay(2)
        assert profile_from_spec({"kind": "Uniform", "params": [1], "dim": 2}) == uniform(1, dim=2)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            profile_from_spec({"kind": "Uniform", "params": [1], "rate": 2})
        assert excinfo.value.key == "profile.rate"

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="must be one of"):
            profile_from_spec({"kind": "Gaussian"})

    def test_wrong_param_count(self):
        with pytest.raises(ConfigError) as excinfo:
            profile_from_spec({"kind": "Periodic", "params": [2]})
        assert excinfo.value.key == "profile.params"

    def test_tabulated_limits(self):
        spec = {
            "kind": "Tabulated",
            "samples": {"x": [0, 1, 2], "a": [1, 2, 1]},
            "limits": [{"kind": "Uniform", "params": [1]}],
        }
        profile = profile_from_spec(spec)
        assert profile.kind == ProfileKind.TABULATED
        assert profile.declared_limits == (uniform(1),)

    def test_offset_and_tag(self):
        profile = profile_from_spec({"kind": "RationalBump", "params": [1], "offset": 2, "tag": "bump"})
        assert profile.label == "bump"
        assert float(evaluate(profile, 0.0)) == pytest.approx(0.2)


class TestDigest:
    def test_stable_and_distinct(self):
        assert profile_digest(exp_decay(2)) == profile_digest(exp_decay(2.0))
        assert profile_digest(exp_decay(2)) != profile_digest(exp_decay(3))
        assert profile_digest(rational_bump()) != profile_digest(translate(rational_bump(), 1))
