"""Tests for grids, assembly and multipliers (src/discretize.py)."""

import math
import warnings

import numpy as np
import pytest
import scipy.linalg

from src.coefficients import exp_decay, matrix_diag_2d, periodic, rational_bump, uniform
from src.discretize import (
    Boundary,
    assemble,
    box_grid,
    fourier_multiplier,
    grid_from_spec,
    line_grid,
    position_multiplier,
    to_triplets,
    translation_operator,
)
from src.errors import ArgumentError, ConfigError, DegeneracyError, ResolutionWarning, UnsupportedError


def _lowest(op, count=1):
    return scipy.linalg.eigvalsh(op.dense())[:count]


class TestGrid:
    def test_dirichlet_nodes_are_interior(self):
        grid = line_grid(0, 1, 9)
        nodes = grid.nodes()
        assert grid.spacing[0] == pytest.approx(0.1)
        assert nodes[0] == pytest.approx(0.1)
        assert nodes[-1] == pytest.approx(0.9)

    def test_periodic_nodes_start_at_lower(self):
        grid = line_grid(0, 8, 8, periodic=True)
        assert np.allclose(grid.nodes(), np.arange(8))

    def test_too_few_points(self):
        with pytest.raises(ArgumentError, match="at least 8"):
            line_grid(0, 1, 4)

    def test_2d_nodes_row_major(self):
        grid = box_grid((0, 0), (1, 2), (8, 9))
        nodes = grid.nodes()
        assert nodes.shape == (72, 2)
        assert nodes[1, 0] == nodes[0, 0]
        assert nodes[1, 1] > nodes[0, 1]


class TestAssemble:
    def test_uniform_dirichlet_lowest_eigenvalue(self):
        op = assemble(uniform(1), line_grid(0, math.pi, 200), Boundary.DIRICHLET)
        assert _lowest(op)[0] == pytest.approx(1.0, abs=1e-3)

    def test_linear_in_coefficient(self):
        grid = line_grid(-2, 3, 40)
        one = assemble(uniform(1), grid).dense()
        three = assemble(uniform(3), grid).dense()
        assert np.allclose(three, 3 * one)

    @pytest.mark.parametrize("boundary", [Boundary.DIRICHLET, Boundary.NEUMANN])
    def test_symmetric_and_nonnegative(self, boundary):
        op = assemble(rational_bump(), line_grid(-10, 10, 120), boundary)
        assert op.symmetry_defect() <= 1e-14
        assert _lowest(op)[0] >= -1e-10

    def test_neumann_kills_constants(self):
        op = assemble(exp_decay(1), line_grid(-2, 2, 50), Boundary.NEUMANN)
        assert np.allclose(op.matrix @ np.ones(50), 0.0, atol=1e-10)

    def test_periodic_kills_constants(self):
        grid = line_grid(0, 2 * math.pi, 64, periodic=True)
        op = assemble(periodic(2, 1, 2 * math.pi), grid, Boundary.PERIODIC)
        assert np.allclose(op.matrix @ np.ones(64), 0.0, atol=1e-10)

    def test_dirichlet_1d_is_tridiagonal(self):
        op = assemble(exp_decay(2), line_grid(-1, 1, 30))
        dense = op.dense()
        assert np.count_nonzero(np.triu(dense, 2)) == 0

    def test_2d_uniform_lowest_eigenvalue(self):
        grid = box_grid((0, 0), (math.pi, math.pi), (40, 40))
        op = assemble(uniform(1, dim=2), grid, Boundary.DIRICHLET)
        assert _lowest(op)[0] == pytest.approx(2.0, abs=1e-2)

    def test_2d_matrix_profile_symmetric_psd(self):
        grid = box_grid((-2, -2), (2, 2), (12, 12))
        op = assemble(matrix_diag_2d(1.0, 2.0, theta=0.5, amp=0.3), grid, Boundary.NEUMANN)
        assert op.symmetry_defect() < 1e-12
        assert _lowest(op)[0] >= -1e-10

    def test_degenerate_profile(self):
        with pytest.raises(DegeneracyError):
            assemble(uniform(0.0), line_grid(0, 1, 16))

    def test_boundary_must_match_grid(self):
        with pytest.raises(ArgumentError):
            assemble(uniform(1), line_grid(0, 1, 16), Boundary.PERIODIC)

    def test_coarse_periodic_grid_warns(self):
        grid = line_grid(0, 20, 16, periodic=True)
        with pytest.warns(ResolutionWarning):
            assemble(periodic(2, 1, 1.0), grid, Boundary.PERIODIC)

    def test_resolved_periodic_grid_is_quiet(self):
        grid = line_grid(0, 2 * math.pi, 64, periodic=True)
        with warnings.catch_warnings():
            warnings.simplefilter("error", ResolutionWarning)
            assemble(periodic(2, 1, 2 * math.pi), grid, Boundary.PERIODIC)

    def test_ceiling_clamps(self):
        grid = line_grid(-4, 0, 30)
        clamped = assemble(exp_decay(2), grid, ceiling=1.0).dense()
        assert np.allclose(clamped, assemble(uniform(1), grid).dense())

    def test_digest_tracks_inputs(self):
        grid = line_grid(0, 1, 16)
        assert assemble(uniform(1), grid).digest() == assemble(uniform(1), grid).digest()
        assert assemble(uniform(1), grid).digest() != assemble(uniform(2), grid).digest()
        assert assemble(uniform(1), grid).digest() != assemble(uniform(1), grid, Boundary.NEUMANN).digest()


class TestMultipliers:
    def test_position_identity(self):
        grid = line_grid(0, 1, 16)
        assert np.allclose(position_multiplier(grid, np.ones_like).dense(), np.eye(16))

    def test_position_values_at_nodes(self):
        grid = line_grid(0, 8, 8, periodic=True)
        op = position_multiplier(grid, lambda x: 1 / (1 + x**2))
        assert np.allclose(np.diag(op.dense())[:2], [1.0, 0.5])

    def test_phase_multiplier_is_unitary(self):
        grid = line_grid(-5, 5, 32, periodic=True)
        V = position_multiplier(grid, lambda x: np.exp(0.3j * x)).dense()
        assert np.allclose(V @ V.conj().T, np.eye(32))

    def test_fourier_identity(self):
        grid = line_grid(0, 1, 16, periodic=True)
        assert np.allclose(fourier_multiplier(grid, np.ones_like), np.eye(16))

    def test_fourier_needs_periodic_grid(self):
        with pytest.raises(UnsupportedError):
            fourier_multiplier(line_grid(0, 1, 16), np.ones_like)

    def test_fourier_phase_is_cyclic_shift(self):
        grid = line_grid(0, 16, 16, periodic=True)
        s = 3.0
        via_symbol = fourier_multiplier(grid, lambda k: np.exp(1j * s * k))
        f = np.random.default_rng(0).normal(size=16)
        assert np.allclose(via_symbol @ f, np.roll(f, -3))

    def test_heat_multiplier_matches_expm(self):
        grid = line_grid(0, 2 * math.pi, 32, periodic=True)
        t = 0.2
        h_t = fourier_multiplier(grid, lambda k: np.exp(-(k**2) * t))
        assert np.allclose(h_t, h_t.T)
        eig = np.linalg.eigvalsh(h_t)
        assert eig.max() == pytest.approx(1.0)
        assert eig.min() > -1e-12


class TestTranslation:
    def test_integer_shift_is_permutation(self):
        grid = line_grid(0, 10, 20, periodic=True)
        U = translation_operator(grid, 1.0)
        f = np.arange(20.0)
        assert np.array_equal(U @ f, np.roll(f, -2))

    def test_fractional_shift_is_unitary(self):
        grid = line_grid(0, 10, 20, periodic=True)
        U = translation_operator(grid, 0.3)
        assert np.allclose(U @ U.conj().T, np.eye(20))

    def test_2d_shift(self):
        grid = box_grid((0, 0), (8, 8), (8, 8), periodic=True)
        U = translation_operator(grid, (1.0, 2.0))
        f = np.arange(64.0).reshape(8, 8)
        assert np.array_equal((U @ f.ravel()).reshape(8, 8), np.roll(f, (-1, -2), axis=(0, 1)))


class TestTriplets:
    def test_reconstruct_matrix(self):
        op = assemble(rational_bump(), line_grid(-3, 3, 20))
        rows, cols, values = to_triplets(op)
        rebuilt = np.zeros((20, 20))
        rebuilt[rows, cols] = values
        assert np.allclose(rebuilt, op.dense())
        assert np.all(np.diff(rows) >= 0)


class TestGridFromSpec:
    def test_defaults(self):
        grid, boundary = grid_from_spec({"lower": -1, "upper": 1, "n": 64})
        assert grid.points == (64,)
        assert boundary == Boundary.DIRICHLET

    def test_periodic_default_boundary(self):
        _, boundary = grid_from_spec({"lower": 0, "upper": 1, "n": 16, "periodic": True})
        assert boundary == Boundary.PERIODIC

    def test_2d_broadcast_bounds(self):
        grid, _ = grid_from_spec({"lower": 0, "upper": 1, "n": [8, 10]})
        assert grid.lower == (0.0, 0.0)
        assert grid.points == (8, 10)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            grid_from_spec({"lower": 0, "upper": 1, "n": 16, "spacing": 0.1})
        assert excinfo.value.key == "grid.spacing"

    def test_conflicting_boundary(self):
        with pytest.raises(ConfigError, match="conflicts"):
            grid_from_spec({"lower": 0, "upper": 1, "n": 16, "boundary": "Periodic"})

    def test_bad_grid_becomes_config_error(self):
        with pytest.raises(ConfigError):
            grid_from_spec({"lower": 1, "upper": 0, "n": 16})
