"""Tests for weighted graphs and their heat-kernel estimates (src/graphmanifold.py)."""

import math

import numpy as np
import pytest

from src.errors import ArgumentError
from src.graphmanifold import (
    build_graph,
    doubling_constant,
    from_edges,
    gaussian_audit,
    gaussian_fit,
    half_plane_measure,
    heat_kernel,
    holder_audit,
    lattice_graph,
    path_graph,
    poincare_constant,
    poincare_quotient,
    tree_graph,
    truncation_error,
)


@pytest.fixture(scope="module")
def lattice():
    return lattice_graph((21, 21))


class TestConstruction:
    def test_lattice_counts(self):
        g = lattice_graph((5, 5))
        assert g.size == 25
        assert len(g.edges) == 40

    def test_path_distances(self):
        g = path_graph(10, spacing=0.5)
        assert g.distances()[0, 9] == pytest.approx(4.5)

    def test_tree_size(self):
        assert tree_graph(2, 3).size == 15

    def test_disconnected(self):
        with pytest.raises(ArgumentError, match="disconnected"):
            from_edges(np.ones(4), [(0, 1), (2, 3)], [1.0, 1.0])

    def test_nonpositive_measure(self):
        with pytest.raises(ArgumentError):
            from_edges(np.array([1.0, 0.0]), [(0, 1)], [1.0])

    def test_half_plane_measure(self):
        g = lattice_graph((4, 4), measure=half_plane_measure(3.0))
        assert sorted(set(g.measure.tolist())) == [1.0, 3.0]

    def test_build_from_spec(self):
        assert build_graph({"kind": "path", "n": 8}).size == 8
        assert build_graph({"kind": "lattice", "shape": [4, 5]}).size == 20
        with pytest.raises(ArgumentError):
            build_graph({"kind": "lattice", "colour": "red"})
        with pytest.raises(ArgumentError):
            build_graph({"kind": "hypercube"})


class TestHeatKernel:
    def test_symmetric_and_stochastic(self):
        g = lattice_graph((6, 6), measure=half_plane_measure(2.0))
        h = heat_kernel(g, 0.7)
        assert np.allclose(h, h.T)
        assert np.allclose(h @ g.measure, 1.0)

    def test_positive_time(self):
        with pytest.raises(ArgumentError):
            heat_kernel(path_graph(8), 0.0)


class TestVolumeConstants:
    def test_path_doubling(self):
        estimate = doubling_constant(path_graph(101), [1, 2, 4])
        assert estimate.value == pytest.approx(17 / 9)
        assert not estimate.inconclusive

    def test_lattice_doubling(self, lattice):
        estimate = doubling_constant(lattice, [1, 2, 4], samples=8)
        assert 1 < estimate.value < 5

    def test_tree_is_inconclusive(self):
        estimate = doubling_constant(tree_graph(2, 6), [2, 4])
        assert estimate.inconclusive
        assert estimate.notes

    def test_poincare(self, lattice):
        assert poincare_quotient(lattice, 220, 2.0) > 0
        estimate = poincare_constant(lattice, [1, 2], samples=4)
        assert estimate.rows
        assert np.isfinite(estimate.value)


class TestGaussianBound:
    def test_fit(self, lattice):
        audit = gaussian_fit(lattice, 4.0)
        assert audit.exponent > 0
        assert audit.passed
        assert audit.calibration_t == 4.0
        assert audit.max_ratio == pytest.approx(1.0)
        assert len(audit.row()) == 7

    def test_diagonal_bound(self, lattice):
        audit = gaussian_fit(lattice, 4.0)
        h = heat_kernel(lattice, 4.0)
        volumes = np.array([lattice.volume(x, 2.0) for x in range(lattice.size)])
        assert np.all(np.diag(h) <= audit.constant / volumes * (1 + 1e-9))

    def test_exponent_stable_when_t_doubles(self, lattice):
        exponents = [gaussian_fit(lattice, t).exponent for t in (2.0, 4.0, 8.0)]
        for previous, doubled in zip(exponents, exponents[1:]):
            assert doubled == pytest.approx(previous, rel=0.25)

    def test_smaller_constant_is_violated(self, lattice):
        fit = gaussian_fit(lattice, 4.0)
        audit = gaussian_fit(lattice, 4.0, constant=fit.constant / 10, exponent=fit.exponent)
        assert audit.max_ratio == pytest.approx(10.0)
        assert audit.violations
        assert not audit.passed

    def test_calibrated_constants_carry_over(self, lattice):
        audits = gaussian_audit(lattice, [8.0, 2.0, 4.0])
        assert [a.t for a in audits] == [2.0, 4.0, 8.0]
        assert all(a.calibration_t == 2.0 for a in audits)
        assert all(a.constant == audits[0].constant for a in audits)
        assert all(a.passed for a in audits)

    def test_needs_both_constants(self, lattice):
        with pytest.raises(ArgumentError, match="both"):
            gaussian_fit(lattice, 4.0, constant=1.0)

    def test_needs_times(self, lattice):
        with pytest.raises(ArgumentError):
            gaussian_audit(lattice, [])


class TestHolderAudit:
    def test_same_time_admits_largest_exponent(self, lattice):
        audit = holder_audit(lattice, 4.0, audit_t=4.0, samples=6)
        assert len(audit.scan) == 10
        assert audit.exponent == 1.0
        assert audit.max_ratio == pytest.approx(1.0)
        assert audit.passed

    def test_constants_carry_to_double_time(self, lattice):
        audit = holder_audit(lattice, 4.0, samples=6)
        assert (audit.calibration_t, audit.t) == (4.0, 8.0)
        assert audit.pairs > 0
        assert 0 < audit.exponent <= 1
        assert audit.max_ratio <= audit.margin * (1 + 1e-9)
        assert audit.passed

    def test_tight_margin_fails(self, lattice):
        audit = holder_audit(lattice, 4.0, samples=6, margin=1e-6)
        assert audit.violations
        assert not audit.passed

    def test_no_triples_does_not_pass(self, lattice):
        # sqrt(t) and sqrt(2t) are both shorter than one edge
        audit = holder_audit(lattice, 0.25, samples=6)
        assert audit.pairs == 0
        assert math.isnan(audit.max_ratio)
        assert not audit.passed

    def test_plain_bound_at_unit_time(self, lattice):
        audit = holder_audit(lattice, 1.0, relative=False, audit_t=1.0, samples=6)
        assert audit.pairs > 0
        assert audit.passed

    def test_exponent_range(self, lattice):
        with pytest.raises(ArgumentError):
            holder_audit(lattice, 4.0, alphas=[0.5, 1.5])

    def test_margin_must_be_positive(self, lattice):
        with pytest.raises(ArgumentError, match="margin"):
            holder_audit(lattice, 4.0, margin=0.0)


class TestTruncation:
    def test_errors_decay_within_schur(self):
        fit = truncation_error(lattice_graph((15, 15)), [2, 3, 4, 5, 6], t=1.0)
        assert [row[0] for row in fit.rows] == [2.0, 3.0, 4.0, 5.0, 6.0]
        assert fit.monotone
        assert fit.within_schur
        assert fit.exponent > 0
