"""Tests for asymptotic families and essential-spectrum comparisons (src/asymptotic.py)."""

import numpy as np
import pytest
import scipy.sparse as sp

from src.asymptotic import (
    CompareConfig,
    c0_counterexample,
    compare_essential,
    declared_family,
    family_of,
    floquet_bands,
    limit_spectrum,
    spectrum_at_infinity,
    union_spectrum,
)
from src.coefficients import blend, periodic, rational_bump, tabulated, uniform
from src.discretize import line_grid
from src.errors import ArgumentError, DegeneracyError, UnsupportedError
from src.metric import closed_metric

SMALL_COMPARE = CompareConfig(window=(0.0, 10.0), L_list=(10.0, 20.0, 40.0), points_per_unit=4.0)


class TestFamilies:
    def test_blend_limits(self):
        family = family_of(blend(1.0, 4.0))
        assert set(family.limits) == {uniform(1), uniform(4)}
        assert len(family.directions) == len(family.limits)
        assert not family.has_degenerate

    def test_rational_bump_is_degenerate(self):
        assert family_of(rational_bump()).has_degenerate

    def test_empty_declaration_falls_back(self):
        assert set(declared_family(blend(1.0, 4.0), []).limits) == {uniform(1), uniform(4)}

    def test_declared_must_match_builtin(self):
        with pytest.raises(ArgumentError, match="do not match"):
            declared_family(blend(1.0, 4.0), [uniform(2)])

    def test_tabulated_accepts_declaration(self):
        base = tabulated([0.0, 1.0], [1.0, 2.0])
        family = declared_family(base, [uniform(1), uniform(2)], ["-inf", "+inf"])
        assert family.directions == ["-inf", "+inf"]

    def test_direction_count(self):
        with pytest.raises(ArgumentError):
            declared_family(tabulated([0.0, 1.0], [1.0, 2.0]), [uniform(1)], ["-inf", "+inf"])


class TestLimitSpectra:
    def test_floquet_first_band_starts_at_zero(self):
        bands = floquet_bands(periodic(2, 1, 2 * np.pi))
        assert bands[0][0] == pytest.approx(0.0, abs=1e-10)
        assert all(lo <= hi for lo, hi in bands)

    def test_constant_periodic_bands_touch(self):
        bands = sorted(floquet_bands(periodic(1, 0, 2 * np.pi)))
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            assert lo - hi < 1e-9

    def test_floquet_needs_periodic(self):
        with pytest.raises(UnsupportedError):
            floquet_bands(uniform(1))

    def test_constant_limit(self):
        assert limit_spectrum(uniform(3), (-1, 10)) == [(0.0, 10)]

    def test_degenerate_limit(self):
        with pytest.raises(DegeneracyError):
            limit_spectrum(uniform(0.0), (0, 10))
        assert limit_spectrum(uniform(0.0), (0, 10), allow_degenerate=True) == [(0.0, 0.0)]

    def test_union_of_constants(self):
        union = union_spectrum(family_of(blend(1.0, 4.0)), (0, 10))
        assert union.intervals == [(0.0, 10.0)]
        assert {rec.boundary for rec in union.evidence[0]} == {uniform(1).label, uniform(4).label}


class TestCompareEssential:
    def test_blend_agrees(self):
        base = blend(1.0, 4.0)
        result = compare_essential(base, family_of(base), SMALL_COMPARE)
        assert result.verdict == "agree"
        assert result.distance <= result.tol_h
        sources = {row[0] for row in result.rows()}
        assert sources == {"estimate", "union"}

    def test_rational_bump_disagrees(self):
        base = rational_bump()
        result = compare_essential(base, family_of(base), SMALL_COMPARE)
        assert result.degenerate_limits
        assert result.union.intervals == [(0.0, 0.0)]
        assert result.verdict == "disagree"

    def test_explicit_tolerance(self):
        base = blend(1.0, 4.0)
        config = CompareConfig(window=(0.0, 10.0), L_list=(10.0, 20.0, 40.0), points_per_unit=4.0, tol_h=0.5)
        assert compare_essential(base, family_of(base), config).tol_h == 0.5

    def test_degenerate_base(self):
        with pytest.raises(DegeneracyError):
            compare_essential(uniform(0.0), family_of(uniform(1)), SMALL_COMPARE)


class TestC0Multiplier:
    def test_rational_translates_vanish(self):
        report = c0_counterexample("rational", L_list=(5.0, 10.0, 20.0), points_per_unit=4)
        assert report.range_closure == (0.0, 1.0)
        assert report.translates_vanish
        assert report.spectrum_rows[-1][2] < 0.1

    def test_sine_translates_persist(self):
        report = c0_counterexample("sin", L_list=(5.0, 10.0), points_per_unit=4)
        assert not report.translates_vanish

    def test_custom_shifts(self):
        report = c0_counterexample("gaussian", L_list=(5.0,), shifts=[0.0, 10.0, 30.0])
        assert [row[0] for row in report.shift_rows] == [0.0, 10.0, 30.0]


def _laplacian_plus_bump(grid):
    n = grid.size
    x = grid.nodes()
    T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).toarray()
    return T + np.diag(5 * np.exp(-(x**2)))


class TestSpectrumAtInfinity:
    @pytest.fixture
    def grid(self):
        return line_grid(0, 40, 199)

    def test_bump_disappears(self, grid):
        estimate = spectrum_at_infinity(_laplacian_plus_bump(grid), grid, [5.15, 10.15, 20.15], center=(0.2,))
        assert len(estimate.intervals) == 1
        lo, hi = estimate.intervals[0]
        assert lo < 0.01
        assert hi > 3.99
        assert estimate.conclusive

    def test_metric_distances(self, grid):
        A = _laplacian_plus_bump(grid)
        euclid = spectrum_at_infinity(A, grid, [5.15, 10.15, 20.15], center=(0.2,))
        metric = closed_metric(uniform(4), grid)
        weighted = spectrum_at_infinity(A, grid, [2.575, 5.075, 10.075], center=(0.2,), metric=metric)
        assert np.allclose(np.array(weighted.intervals), np.array(euclid.intervals))

    def test_needs_two_radii(self, grid):
        with pytest.raises(ArgumentError):
            spectrum_at_infinity(np.eye(199), grid, [5.0])

    def test_radius_beyond_grid(self, grid):
        with pytest.raises(ArgumentError, match="no grid nodes"):
            spectrum_at_infinity(np.eye(199), grid, [5.0, 100.0])

    def test_needs_self_adjoint(self, grid):
        A = np.triu(np.ones((199, 199)))
        with pytest.raises(UnsupportedError):
            spectrum_at_infinity(A, grid, [5.0, 10.0])
