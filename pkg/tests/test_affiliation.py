"""Tests for the D/E diagnostics (src/affiliation.py)."""

import math

import numpy as np
import pytest

from src.affiliation import (
    ClassifyConfig,
    Verdict,
    ball_nodes,
    band_decompose,
    build_regularizer,
    classify,
    form_commutator_sweep,
    ideal_ops,
    random_bounded_support,
    random_finite_range,
    range_width,
    shade_identity_check,
    uniformity_study,
    us_sweep,
    vk_sweep,
)
from src.coefficients import exp_decay, uniform
from src.discretize import Boundary, assemble, line_grid
from src.errors import ArgumentError, PreconditionError, RegularizerError, UnsupportedError
from src.metric import closed_metric, cube_partition, pairwise_node_distances
from src.spectral import resolvent

SMALL_STUDY = ClassifyConfig(
    L_list=(5.0, 10.0, 20.0, 40.0),
    k_list=(0.01, 0.02, 0.05),
    s_list=(0.25, 0.5, 1.0),
    points_per_unit=4.0,
)


class TestSweeps:
    def test_multiplication_commutes_with_phase(self):
        grid = line_grid(-4, 4, 40)
        x = grid.nodes()
        sweep = vk_sweep(np.diag(1 / (1 + x**2)), grid, [0.0, 0.5, 2.0])
        assert np.allclose(sweep.norms, 0.0, atol=1e-12)
        assert sweep.parameter == "k"

    def test_identity_under_one_cell_shift(self):
        grid = line_grid(0, 8, 16, periodic=True)
        sweep = us_sweep(np.eye(16), grid, [0.0, 0.5])
        assert sweep.norms[0] == 0.0
        assert sweep.norms[1] == pytest.approx(2.0)

    def test_us_sweep_needs_periodic(self):
        with pytest.raises(UnsupportedError):
            us_sweep(np.eye(16), line_grid(0, 8, 16), [0.5])

    def test_rows_carry_context(self):
        grid = line_grid(0, 8, 16, periodic=True)
        sweep = us_sweep(np.eye(16), grid, [0.5], context={"L": 4, "profile": "id"})
        assert sweep.rows() == [[0.5, sweep.norms[0], 4, 16, "id"]]


class TestUniformity:
    def test_uniform_is_flat(self):
        study = uniformity_study(uniform(1), 1.0, [5, 10, 20, 40], 4)
        assert len(study.rows) == 4
        assert study.sup <= 2 * 1.0
        assert study.relative_variation < 0.1

    def test_zero_shift(self):
        study = uniformity_study(uniform(1), 0.0, [5, 10, 20, 40], 4)
        assert study.sup == 0.0
        assert study.kendall_tau == 0.0

    def test_needs_four_boxes(self):
        with pytest.raises(ArgumentError):
            uniformity_study(uniform(1), 1.0, [5, 10, 20], 4)

    def test_mapper_is_used(self):
        calls = []

        def mapper(fn, items):
            items = list(items)
            calls.append(items)
            return map(fn, items)

        uniformity_study(uniform(1), 0.5, [5, 10, 20, 40], 4, mapper=mapper)
        assert calls == [[5.0, 10.0, 20.0, 40.0]]


class TestClassify:
    def test_uniform_is_e_affiliated(self):
        verdict = classify(uniform(1), SMALL_STUDY)
        assert verdict.verdict == Verdict.E_AFFILIATED
        assert verdict.evidence["v_pass"]
        assert verdict.evidence["u_uniform"]

    def test_exp_decay_is_d_only(self):
        verdict = classify(exp_decay(2), SMALL_STUDY)
        assert verdict.verdict == Verdict.D_ONLY
        assert verdict.evidence["u_fails"]

    def test_record_text(self):
        verdict = classify(uniform(1), SMALL_STUDY)
        text = verdict.record_text()
        assert text.startswith("verdict: E_affiliated\n")
        assert "note: thresholds are implementation choices" in text


class TestFormCommutator:
    def test_difference_is_quadratic_in_k(self):
        result = form_commutator_sweep(uniform(1), line_grid(-5, 5, 80), [0.1, 0.2, 0.4])
        assert result.shape_residual < 1e-10
        assert np.all(np.diff(result.sweep.norms) > 0)

    def test_ratio_independent_of_scale(self):
        grid = line_grid(-5, 5, 80)
        one = form_commutator_sweep(uniform(1), grid, [0.1])
        three = form_commutator_sweep(uniform(3), grid, [0.1])
        assert three.raw_quadratic_norm / three.raw_linear_norm == pytest.approx(
            one.raw_quadratic_norm / one.raw_linear_norm, rel=1e-10
        )

    def test_periodic_grid(self):
        grid = line_grid(0, 2 * math.pi, 32, periodic=True)
        result = form_commutator_sweep(uniform(1), grid, [0.0, 0.5])
        assert result.sweep.norms[0] == 0.0
        assert result.shape_residual < 1e-10


class TestRegularizer:
    @pytest.fixture
    def grid(self):
        return line_grid(-4, 4, 32, periodic=True)

    def test_resolvent_range_is_regularized(self, grid):
        A = resolvent(assemble(uniform(1), grid, Boundary.PERIODIC), 1.0)
        reg = build_regularizer(A, grid, 6)
        assert len(reg.times) == 6
        assert all(t <= 2.0 ** -(n + 1) for n, t in enumerate(reg.times))
        assert all(step <= 2.0 ** -(n + 1) * (1 + 1e-9) for n, step in enumerate(reg.step_norms))
        assert all(reg.bounds_hold().values())
        assert [row[0] for row in reg.rows()] == [1, 2, 3, 4, 5, 6]

    def test_identity_has_no_regularizer(self, grid):
        with pytest.raises(RegularizerError) as excinfo:
            build_regularizer(np.eye(32), grid, 4)
        assert excinfo.value.evidence["steps"]

    def test_needs_periodic_grid(self):
        with pytest.raises(UnsupportedError):
            build_regularizer(np.eye(16), line_grid(0, 1, 16), 2)

    def test_budget_positive(self, grid):
        with pytest.raises(ArgumentError):
            build_regularizer(np.eye(32), grid, 0)


class TestBands:
    def test_reconstruction_and_per_band_bound(self):
        grid = line_grid(-3, 3, 59)
        A = np.random.default_rng(1).standard_normal((59, 59))
        bands = band_decompose(A, cube_partition(grid))
        assert bands.reconstruction_error(A) < 1e-12
        assert bands.per_band_bound_holds()
        assert set(bands.bands) == {(r,) for r in range(-6, 7)}


class TestSupports:
    @pytest.fixture
    def metric(self):
        return closed_metric(uniform(1), line_grid(0, 10, 99))

    def test_ball_nodes(self, metric):
        assert ball_nodes(metric, 49, 2.05).size == 41

    def test_ideal_product_support(self, metric):
        rng = np.random.default_rng(5)
        A = random_bounded_support(metric, 49, 2.0, rng)
        B = random_finite_range(metric, 1.0, rng)
        audit = ideal_ops(A, 2.0, B, 1.0, metric, 49)
        assert audit.passed
        assert audit.support_AB <= 3.0 + 1e-9
        assert audit.distance_to_identity >= 1.0

    def test_range_width(self, metric):
        B = random_finite_range(metric, 1.0, np.random.default_rng(2))
        assert range_width(B, pairwise_node_distances(metric)) <= 1.0

    def test_support_precondition(self, metric):
        rng = np.random.default_rng(5)
        A = random_bounded_support(metric, 49, 3.0, rng)
        B = random_finite_range(metric, 1.0, rng)
        with pytest.raises(PreconditionError) as excinfo:
            ideal_ops(A, 2.0, B, 1.0, metric, 49)
        assert "row" in excinfo.value.witness

    def test_range_precondition(self, metric):
        rng = np.random.default_rng(5)
        A = random_bounded_support(metric, 49, 2.0, rng)
        B = random_finite_range(metric, 1.0, rng)
        with pytest.raises(PreconditionError, match="beyond range"):
            ideal_ops(A, 2.0, B, 0.5, metric, 49)


class TestTranslationCovariance:
    def test_translate_keeps_sweep_norms(self):
        grid = line_grid(0, 16, 32, periodic=True)
        S = np.random.default_rng(4).standard_normal((32, 32))
        norms = shade_identity_check(S, grid, 2 * math.pi * 2 / 16, 1.0, 0.5)
        assert norms["v_shifted"] == pytest.approx(norms["v_plain"], rel=1e-10)
        assert norms["u_shifted"] == pytest.approx(norms["u_plain"], rel=1e-10)

    def test_needs_periodic(self):
        with pytest.raises(UnsupportedError):
            shade_identity_check(np.eye(16), line_grid(0, 1, 16), 1.0, 0.1, 0.1)
