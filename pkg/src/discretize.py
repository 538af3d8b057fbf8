"""Finite-difference realizations of divergence-form quadratic forms.

Operators are assembled as L = sum_c w_c G_c^T A G_c where G_c maps nodal
values to difference quotients and A holds coefficient samples, so every
assembled matrix is symmetric and nonnegative by construction.
"""

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.fft
import scipy.sparse as sp

from src.coefficients import CoefficientProfile, ProfileKind, evaluate
from src.errors import ArgumentError, ConfigError, DegeneracyError, UnsupportedError, warn_resolution

logger = logging.getLogger(__name__)

MIN_POINTS = 8


class Boundary(Enum):
    DIRICHLET = "Dirichlet"
    NEUMANN = "Neumann"
    PERIODIC = "Periodic"


@dataclass(frozen=True)
class Grid:
    """Tensor grid on a box.

    Non-periodic grids use interior nodes l + j*h, j = 1..n with
    h = (u - l)/(n + 1); periodic grids use l + j*h, j = 0..n-1 with
    h = (u - l)/n.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points: tuple[int, ...]
    periodic: bool = False

    def __post_init__(self):
        if not (len(self.lower) == len(self.upper) == len(self.points)):
            raise ArgumentError("Grid lower, upper and points must have the same length")
        if self.dim not in (1, 2):
            raise ArgumentError(f"Grid dimension must be 1 or 2, got {self.dim}")
        for lo, hi, n in zip(self.lower, self.upper, self.points):
            if n < MIN_POINTS:
                raise ArgumentError(f"Grid needs at least {MIN_POINTS} points per axis, got {n}")
            if not hi > lo:
                raise ArgumentError(f"Grid upper bound {hi} must exceed lower bound {lo}")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.periodic:
            return tuple((u - lo) / n for lo, u, n in zip(self.lower, self.upper, self.points))
        return tuple((u - lo) / (n + 1) for lo, u, n in zip(self.lower, self.upper, self.points))

    def lengths(self) -> tuple[float, ...]:
        return tuple(u - lo for lo, u in zip(self.lower, self.upper))

    def axis_nodes(self, axis: int = 0) -> np.ndarray:
        n = self.points[axis]
        h = self.spacing[axis]
        j = np.arange(n) if self.periodic else np.arange(1, n + 1)
        return self.lower[axis] + j * h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n,) in 1D and (n0*n1, 2) row-major in 2D."""
        if self.dim == 1:
            return self.axis_nodes(0)
        xs, ys = np.meshgrid(self.axis_nodes(0), self.axis_nodes(1), indexing="ij")
        return np.column_stack([xs.ravel(), ys.ravel()])

    def frequencies(self, axis: int = 0) -> np.ndarray:
        """Discrete frequencies 2*pi*m/L in FFT order."""
        return 2 * np.pi * scipy.fft.fftfreq(self.points[axis], d=self.spacing[axis])


def line_grid(lower: float, upper: float, n: int, periodic: bool = False) -> Grid:
    return Grid((float(lower),), (float(upper),), (int(n),), periodic)


def box_grid(lower, upper, points, periodic: bool = False) -> Grid:
    return Grid(tuple(float(v) for v in lower), tuple(float(v) for v in upper), tuple(int(v) for v in points), periodic)


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: Grid
    matrix: sp.csr_matrix
    boundary: Boundary
    profile_tag: str

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def digest(self) -> str:
        m = self.matrix.tocsr()
        m.sort_indices()
        h = hashlib.sha256()
        for part in (m.indptr, m.indices, m.data):
            h.update(np.ascontiguousarray(part).tobytes())
        h.update(repr((self.grid, self.boundary.value)).encode())
        return h.hexdigest()[:16]

    def symmetry_defect(self) -> float:
        """max|M - M^T| relative to max|M|."""
        scale = abs(self.matrix).max()
        if scale == 0:
            return 0.0
        return abs(self.matrix - self.matrix.T).max() / scale


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


@dataclass
class FormFactor:
    """One quadrature family of the discrete form.

    Q(f) = sum_r,s weight * <grads[r] f, A_rs grads[s] f> where A is sampled
    at ``points``; ``values`` maps nodal values to the same points, which is
    what the momentum shift P -> P + k acts on.
    """

    weight: float
    grads: list[sp.csr_matrix]
    values: sp.csr_matrix


def _check_resolution(profile: CoefficientProfile, grid: Grid) -> None:
    if profile.kind != ProfileKind.PERIODIC:
        return
    period = profile.params[2]
    per_period = period / grid.spacing[0]
    if per_period < MIN_POINTS:
        warn_resolution(
            f"{profile.label}: {per_period:.1f} grid points per period on {grid}; at least {MIN_POINTS} are needed"
        )


def _check_positive(values: np.ndarray, profile: CoefficientProfile) -> None:
    if not np.all(np.isfinite(values)):
        raise DegeneracyError(f"{profile.label} is not finite on the grid")
    if np.any(values <= 0):
        raise DegeneracyError(f"{profile.label} is not strictly positive on the grid (min {values.min():.3g})")


def _factors_1d(grid: Grid, boundary: Boundary) -> tuple[list[FormFactor], np.ndarray]:
    """Forward differences and two-point averages over edges, plus edge midpoints."""
    n = grid.points[0]
    h = grid.spacing[0]
    lo = grid.lower[0]
    if boundary == Boundary.PERIODIC:
        edges = np.arange(n)
        left, right = edges, (edges + 1) % n
        rows = np.arange(n)
        keep_left = keep_right = np.ones(n, dtype=bool)
        mids = lo + (edges + 0.5) * h
    else:
        # edge e joins node e-1 and node e; nodes -1 and n carry the Dirichlet zero
        edges = np.arange(n + 1) if boundary == Boundary.DIRICHLET else np.arange(1, n)
        left, right = edges - 1, edges
        rows = np.arange(len(edges))
        keep_left, keep_right = left >= 0, right < n
        mids = lo + (edges + 0.5) * h
    shape = (len(edges), n)

    def build(w_left: float, w_right: float) -> sp.csr_matrix:
        r = np.concatenate([rows[keep_right], rows[keep_left]])
        c = np.concatenate([right[keep_right], left[keep_left]])
        v = np.concatenate([np.full(keep_right.sum(), w_right), np.full(keep_left.sum(), w_left)])
        return sp.csr_matrix((v, (r, c)), shape=shape)

    factor = FormFactor(weight=1.0, grads=[build(-1.0 / h, 1.0 / h)], values=build(0.5, 0.5))
    return [factor], mids


def _cell_starts(n: int, boundary: Boundary) -> np.ndarray:
    if boundary == Boundary.DIRICHLET:
        return np.arange(-1, n)
    if boundary == Boundary.NEUMANN:
        return np.arange(0, n - 1)
    return np.arange(0, n)


def _node_map(grid: Grid, boundary: Boundary, ci, cj, di: int, dj: int) -> sp.csr_matrix:
    """Rows: cells; a single 1 at the node (ci + di, cj + dj) when it exists."""
    n0, n1 = grid.points
    i, j = ci + di, cj + dj
    if boundary == Boundary.PERIODIC:
        i, j = i % n0, j % n1
        valid = np.ones(len(ci), dtype=bool)
    else:
        valid = (i >= 0) & (i < n0) & (j >= 0) & (j < n1)
    rows = np.arange(len(ci))[valid]
    return sp.csr_matrix((np.ones(valid.sum()), (rows, (i * n1 + j)[valid])), shape=(len(ci), grid.size))


# Corner gradients of a unit cell: (x-difference endpoints, y-difference endpoints, shared corner)
_CORNERS = (
    (((0, 0), (1, 0)), ((0, 0), (0, 1)), (0, 0)),
    (((0, 0), (1, 0)), ((1, 0), (1, 1)), (1, 0)),
    (((0, 1), (1, 1)), ((0, 0), (0, 1)), (0, 1)),
    (((0, 1), (1, 1)), ((1, 0), (1, 1)), (1, 1)),
)


def _factors_2d(grid: Grid, boundary: Boundary) -> tuple[list[FormFactor], np.ndarray]:
    """Four corner-gradient families over cells, plus cell centres."""
    starts0 = _cell_starts(grid.points[0], boundary)
    starts1 = _cell_starts(grid.points[1], boundary)
    ci, cj = (m.ravel() for m in np.meshgrid(starts0, starts1, indexing="ij"))
    h0, h1 = grid.spacing
    shift = 0.5 if boundary == Boundary.PERIODIC else 1.5
    centers = np.column_stack([grid.lower[0] + (ci + shift) * h0, grid.lower[1] + (cj + shift) * h1])
    factors = []
    for (xa, xb), (ya, yb), corner in _CORNERS:
        gx = (_node_map(grid, boundary, ci, cj, *xb) - _node_map(grid, boundary, ci, cj, *xa)) / h0
        gy = (_node_map(grid, boundary, ci, cj, *yb) - _node_map(grid, boundary, ci, cj, *ya)) / h1
        values = _node_map(grid, boundary, ci, cj, *corner)
        factors.append(FormFactor(weight=0.25, grads=[gx.tocsr(), gy.tocsr()], values=values))
    return factors, centers


def form_factors(grid: Grid, boundary: Boundary) -> tuple[list[FormFactor], np.ndarray]:
    if grid.dim == 1:
        return _factors_1d(grid, boundary)
    return _factors_2d(grid, boundary)


def coefficient_tensor(
    profile: CoefficientProfile, points: np.ndarray, ceiling: float | None = None
) -> list[list[np.ndarray]]:
    """A_rs sampled at quadrature points, validated strictly positive."""
    values = evaluate(profile, points)
    if profile.is_matrix:
        a11, a12, a22 = values[:, 0, 0], values[:, 0, 1], values[:, 1, 1]
        _check_positive(a11, profile)
        _check_positive(a11 * a22 - a12**2, profile)
        return [[a11, a12], [a12, a22]]
    if ceiling is not None:
        values = np.minimum(values, ceiling)
    _check_positive(values, profile)
    if profile.dim == 1:
        return [[values]]
    zero = np.zeros_like(values)
    return [[values, zero], [zero, values]]


def assemble(
    profile: CoefficientProfile,
    grid: Grid,
    boundary: Boundary = Boundary.DIRICHLET,
    *,
    ceiling: float | None = None,
) -> DiscreteOperator:
    """Symmetric finite-difference matrix of -div(a grad) on ``grid``.

    ``ceiling`` clamps scalar coefficient samples from above; the affiliation
    classifier uses it for coefficients that blow up inside the window.
    """
    if profile.degenerate:
        raise DegeneracyError(f"{profile.label} is degenerate (a = 0); its form has no operator realization")
    if profile.dim != grid.dim:
        raise ArgumentError(f"{profile.label} is {profile.dim}-dimensional but the grid is {grid.dim}-dimensional")
    if (boundary == Boundary.PERIODIC) != grid.periodic:
        raise ArgumentError(f"boundary {boundary.value} does not match grid periodic={grid.periodic}")
    _check_resolution(profile, grid)

    factors, points = form_factors(grid, boundary)
    tensor = coefficient_tensor(profile, points, ceiling)
    matrix = sp.csr_matrix((grid.size, grid.size))
    for factor in factors:
        for r, gr in enumerate(factor.grads):
            for s, gs in enumerate(factor.grads):
                if np.any(tensor[r][s]):
                    matrix = matrix + factor.weight * (gr.T @ sp.diags(tensor[r][s]) @ gs)
    matrix = matrix.tocsr()

    logger.debug("Assembled %s on %s (%s): %d unknowns", profile.label, grid.points, boundary.value, grid.size)
    return DiscreteOperator(grid=grid, matrix=matrix, boundary=boundary, profile_tag=profile.label)


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def position_multiplier(grid: Grid, phi) -> DiscreteOperator:
    """Diagonal operator with entries phi(x_j); complex phi gives a complex diagonal."""
    values = np.asarray(phi(grid.nodes()))
    if values.shape != (grid.size,):
        raise ArgumentError(f"phi must return one value per node, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ArgumentError("phi is not finite on every grid node")
    boundary = Boundary.PERIODIC if grid.periodic else Boundary.DIRICHLET
    name = getattr(phi, "__name__", "phi")
    return DiscreteOperator(grid=grid, matrix=sp.diags(values).tocsr(), boundary=boundary, profile_tag=f"phi:{name}")


def _periodic_only(grid: Grid, what: str) -> None:
    if not grid.periodic:
        raise UnsupportedError(f"{what} needs a periodic grid")


def fourier_multiplier(grid: Grid, g) -> np.ndarray:
    """F* diag(g(k)) F on a periodic grid.

    ``g`` receives the frequency array (shape (n,) in 1D, (n0, n1, 2) in 2D).
    The result is returned real when its imaginary part is roundoff.
    """
    _periodic_only(grid, "fourier_multiplier")
    if grid.dim == 1:
        symbol = np.asarray(g(grid.frequencies(0)))
        matrix = scipy.fft.ifft(symbol[:, None] * scipy.fft.fft(np.eye(grid.size), axis=0), axis=0)
    else:
        n0, n1 = grid.points
        k0, k1 = np.meshgrid(grid.frequencies(0), grid.frequencies(1), indexing="ij")
        symbol = np.asarray(g(np.stack([k0, k1], axis=-1)))
        ident = np.eye(grid.size).reshape(n0, n1, grid.size)
        spectrum = scipy.fft.fft2(ident, axes=(0, 1)) * symbol[:, :, None]
        matrix = scipy.fft.ifft2(spectrum, axes=(0, 1)).reshape(grid.size, grid.size)
    if np.max(np.abs(matrix.imag)) <= 1e-13 * max(1.0, np.max(np.abs(matrix.real))):
        return matrix.real
    return matrix


def translation_operator(grid: Grid, s) -> np.ndarray:
    """Unitary U_s with (U_s f)(x) = f(x + s) on a periodic grid.

    Integer-cell shifts are exact cyclic permutations; other shifts use the
    Fourier phase e^{iks}.
    """
    _periodic_only(grid, "translation_operator")
    shift = np.atleast_1d(np.asarray(s, dtype=float))
    if shift.shape != (grid.dim,):
        raise ArgumentError(f"shift {s} does not match grid dimension {grid.dim}")
    cells = shift / np.asarray(grid.spacing)
    if np.allclose(cells, np.round(cells), rtol=0, atol=1e-12):
        perms = [np.roll(np.eye(n), int(round(m)), axis=1) for n, m in zip(grid.points, cells)]
        return perms[0] if grid.dim == 1 else np.kron(perms[0], perms[1])
    if grid.dim == 1:
        return fourier_multiplier(grid, lambda k: np.exp(1j * k * shift[0]))
    return fourier_multiplier(grid, lambda k: np.exp(1j * (k[..., 0] * shift[0] + k[..., 1] * shift[1])))


def to_triplets(op: DiscreteOperator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(row, col, value) arrays of the stored nonzeros in row-major order."""
    coo = op.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return coo.row[order], coo.col[order], coo.data[order]


# ---------------------------------------------------------------------------
# Run-config grids
# ---------------------------------------------------------------------------

GRID_KEYS = {"lower", "upper", "n", "periodic", "boundary"}


def _axis_list(value, dim: int, key: str, cast) -> tuple:
    values = value if isinstance(value, list) else [value] * dim
    if len(values) != dim or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"'{key}' must be a number or a list of {dim} numbers", key=key)
    return tuple(cast(v) for v in values)


def grid_from_spec(spec: dict, path: str = "grid") -> tuple[Grid, Boundary]:
    """Grid and boundary condition from a run-config mapping.

    ``n`` fixes the dimension (an int for 1D, a list for 2D); scalar bounds
    apply to every axis. The boundary defaults to Periodic on periodic grids
    and Dirichlet otherwise.
    """
    if not isinstance(spec, dict):
        raise ConfigError(f"'{path}' must be a mapping", key=path)
    unknown = set(spec) - GRID_KEYS
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"Unknown key '{name}' in {path}", key=f"{path}.{name}")
    for required in ("lower", "upper", "n"):
        if required not in spec:
            raise ConfigError(f"'{path}.{required}' is required", key=f"{path}.{required}")
    n = spec["n"]
    dim = len(n) if isinstance(n, list) else 1
    points = _axis_list(n, dim, f"{path}.n", int)
    lower = _axis_list(spec["lower"], dim, f"{path}.lower", float)
    upper = _axis_list(spec["upper"], dim, f"{path}.upper", float)
    periodic = spec.get("periodic", False)
    if not isinstance(periodic, bool):
        raise ConfigError(f"'{path}.periodic' must be true or false", key=f"{path}.periodic")
    default = Boundary.PERIODIC if periodic else Boundary.DIRICHLET
    try:
        boundary = Boundary(spec.get("boundary", default.value))
    except ValueError:
        valid = ", ".join(b.value for b in Boundary)
        raise ConfigError(f"'{path}.boundary' must be one of: {valid}", key=f"{path}.boundary") from None
    if (boundary == Boundary.PERIODIC) != periodic:
        raise ConfigError(
            f"'{path}.boundary' {boundary.value} conflicts with periodic={periodic}", key=f"{path}.boundary"
        )
    try:
        grid = box_grid(lower, upper, points, periodic)
    except ArgumentError as e:
        raise ConfigError(str(e), key=path) from None
    return grid, boundary
