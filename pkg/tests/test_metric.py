"""Tests for the coefficient metric and the heat-kernel audits (src/metric.py)."""

import math

import numpy as np
import pytest

from src.coefficients import exp_decay, matrix_diag_2d, uniform
from src.discretize import Boundary, assemble, box_grid, line_grid
from src.errors import ArgumentError, DomainError
from src.metric import (
    MetricMode,
    arclength,
    block_heat_decay,
    closed_metric,
    cube_partition,
    distance,
    fit_block_tail,
    graph_metric,
    node_distances,
    nodes_in,
    random_disjoint_pairs,
    set_distance,
    verify_heat_bound,
)


class TestClosedMetric:
    def test_uniform_scales_by_inverse_root(self):
        metric = closed_metric(uniform(4), line_grid(0, 2, 50))
        assert metric.mode == MetricMode.CLOSED_1D
        assert float(arclength(metric, 1.0)) == pytest.approx(0.5)
        assert distance(metric, 0.5, 1.5) == pytest.approx(0.5)

    def test_exp_decay_closed_form(self):
        metric = closed_metric(exp_decay(2), line_grid(0, 2, 50))
        assert float(arclength(metric, 2.0)) == pytest.approx(math.e**2 - 1, rel=1e-10)
        assert float(arclength(metric, 0.73)) == pytest.approx(math.exp(0.73) - 1, rel=1e-10)

    def test_outside_box(self):
        metric = closed_metric(uniform(1), line_grid(0, 1, 16))
        with pytest.raises(DomainError):
            arclength(metric, 1.5)

    def test_needs_1d(self):
        with pytest.raises(ArgumentError):
            closed_metric(uniform(1, dim=2), box_grid((0, 0), (1, 1), (8, 8)))


class TestGraphMetric:
    def test_1d_agrees_with_closed(self):
        grid = line_grid(0, 2, 400)
        closed = node_distances(closed_metric(exp_decay(2), grid), 0)
        graph = node_distances(graph_metric(exp_decay(2), grid), 0)
        assert np.allclose(graph, closed, rtol=1e-3, atol=1e-12)

    def test_2d_diagonal_steps(self):
        metric = graph_metric(uniform(1, dim=2), box_grid((0, 0), (1, 1), (9, 9)))
        assert metric.mode == MetricMode.GRAPH_ND
        assert distance(metric, (0.1, 0.1), (0.5, 0.5)) == pytest.approx(0.4 * math.sqrt(2))

    def test_matrix_profile_between_eigen_bounds(self):
        metric = graph_metric(matrix_diag_2d(1.0, 4.0), box_grid((0, 0), (1, 1), (9, 9)))
        d = distance(metric, (0.1, 0.5), (0.5, 0.5))
        assert 0.4 / 2 - 1e-12 <= d <= 0.4 + 1e-12


class TestSets:
    @pytest.fixture
    def metric(self):
        return closed_metric(uniform(1), line_grid(0, 10, 99))

    def test_nodes_in(self, metric):
        E = nodes_in(metric.grid, 1, 2, name="E")
        assert E.name == "E"
        assert E.indices.size == 11

    def test_set_distance(self, metric):
        E = nodes_in(metric.grid, 1, 2)
        F = nodes_in(metric.grid, 4, 5)
        assert set_distance(metric, E, F) == pytest.approx(2.0)
        assert set_distance(metric, F, E) == pytest.approx(2.0)

    def test_overlap_is_zero(self, metric):
        assert set_distance(metric, nodes_in(metric.grid, 1, 3), nodes_in(metric.grid, 2, 4)) == 0.0

    def test_empty_set(self, metric):
        with pytest.raises(ArgumentError):
            set_distance(metric, np.array([], dtype=int), nodes_in(metric.grid, 1, 2))

    def test_random_pairs_are_disjoint(self, metric):
        pairs = random_disjoint_pairs(metric.grid, 6, np.random.default_rng(3), max_length=1.0)
        assert len(pairs) == 6
        for E, F in pairs:
            assert np.intersect1d(E.indices, F.indices).size == 0
            assert set_distance(metric, E, F) > 0


class TestHeatBound:
    @pytest.fixture
    def setup(self):
        grid = line_grid(-4, 4, 159)
        op = assemble(uniform(1), grid, Boundary.DIRICHLET)
        return grid, op

    def test_uniform_passes(self, setup):
        grid, op = setup
        metric = closed_metric(uniform(1), grid)
        pairs = random_disjoint_pairs(grid, 10, np.random.default_rng(0))
        audit = verify_heat_bound(op, metric, pairs, [0.1, 0.5, 1.0])
        assert len(audit.rows) == 30
        assert audit.passed

    def test_wrong_metric_is_caught(self, setup):
        grid, op = setup
        metric = closed_metric(uniform(0.01), grid)
        pairs = [(nodes_in(grid, -2, -1, "E"), nodes_in(grid, 1, 2, "F"))]
        audit = verify_heat_bound(op, metric, pairs, [1.0])
        assert not audit.passed
        assert audit.violations[0][:2] == ["E", "F"]


class TestBlockDecay:
    def test_partition_1d(self):
        partition = cube_partition(line_grid(-3, 3, 59))
        assert partition.centers == [(i,) for i in range(-3, 4)]
        assert sum(b.size for b in partition.blocks) == 59

    def test_partition_2d(self):
        partition = cube_partition(box_grid((-2, -2), (2, 2), (19, 19)))
        assert len(partition.centers) == 25
        assert partition.dim == 2

    def test_uniform_1d_within_bound(self):
        grid = line_grid(-6, 6, 239)
        op = assemble(uniform(1), grid)
        decay = block_heat_decay(op, cube_partition(grid), t=0.5, c=1.0)
        assert decay.k_declared == 1.0
        assert decay.passed
        assert decay.k_fitted <= decay.k_declared + 1e-9
        assert decay.tail is not None

    def test_fit_recovers_constants(self):
        r = np.arange(2.0, 9.0)
        mu = np.exp(-((r - 1.5) ** 2) / (4 * 2.0 * 1.0))
        fit = fit_block_tail(r, mu, t=1.0)
        assert fit.c == pytest.approx(2.0)
        assert fit.k == pytest.approx(1.5)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.points == 7

    def test_fit_needs_three_points(self):
        with pytest.raises(ArgumentError):
            fit_block_tail([1.0, 2.0], [0.5, 0.1], t=1.0)
