"""Liouville change of variable for one-dimensional operators.

With s(x) = int a(u)^{-1/2} du, sigma = a^{1/4} and h(s) = sigma(s) f(x(s)),
the operator -(a f')' becomes K h = -h'' + V h with V = sigma''/sigma.
Built-in kinds with elementary antiderivatives use closed forms; everything
else goes through the quadrature table of the metric module and a spline
inverse polished by Newton steps.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from src.coefficients import CoefficientProfile, ProfileKind, derivative, ellipticity_bounds, evaluate, uniform
from src.config import DEFAULT_TOLERANCES, Tolerances
from src.discretize import Boundary, DiscreteOperator, Grid, assemble, line_grid
from src.errors import (
    AnalyticDerivativeError,
    ArgumentError,
    DegeneracyError,
    DomainError,
    SingularityError,
    UnsupportedError,
)
from src.metric import arclength, closed_metric
from src.spectral import eigensolve, resolvent

logger = logging.getLogger(__name__)

TRANSFORM_COLUMNS = ["x", "s", "sigma", "V"]
EQUIVALENCE_COLUMNS = ["n", "index", "lambda_x", "lambda_s", "relative_error"]

CLOSED_FORM_KINDS = (ProfileKind.UNIFORM, ProfileKind.EXP_DECAY, ProfileKind.POWER)
_NEWTON_STEPS = 3
_TABLE_RESOLUTION = 4096
_PAD_FRACTION = 0.05


class PotentialMethod(Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(eq=False)
class LiouvilleTransform:
    """s(x), x(s), sigma(s) and V(s) over a finite x-window."""

    profile: CoefficientProfile
    x_window: tuple[float, float]
    s_window: tuple[float, float]
    s_range: tuple[float, float]
    method: PotentialMethod = PotentialMethod.ANALYTIC
    singular_points: tuple[float, ...] = ()
    base: float = 0.0
    _table: object = field(default=None, repr=False)
    _inverse: CubicSpline | None = field(default=None, repr=False)

    @property
    def closed_form(self) -> bool:
        return self._table is None

    # -----------------------------------------------------------------------
    # Change of variable
    # -----------------------------------------------------------------------

    def s_of_x(self, x) -> np.ndarray:
        xs = np.asarray(x, dtype=float)
        if self.closed_form:
            return _closed_s(self.profile, xs)
        return arclength(self._table, xs) - self.base

    def x_of_s(self, s) -> np.ndarray:
        ss = np.asarray(s, dtype=float)
        if self.closed_form:
            return _closed_x(self.profile, ss)
        lo, hi = self._table.table_x[0], self._table.table_x[-1]
        x = np.clip(self._inverse(ss), lo, hi)
        for _ in range(_NEWTON_STEPS):
            # ds/dx = a^{-1/2}
            x = np.clip(x - (self.s_of_x(x) - ss) * np.sqrt(evaluate(self.profile, x)), lo, hi)
        return x

    def sigma(self, s) -> np.ndarray:
        return evaluate(self.profile, self.x_of_s(s)) ** 0.25

    def potential(self, s, spacing: float | None = None) -> np.ndarray:
        """V(s), analytic or by fourth-order central differences of sigma."""
        ss = np.asarray(s, dtype=float)
        if self.method == PotentialMethod.FINITE_DIFFERENCE:
            delta = spacing or (self.s_window[1] - self.s_window[0]) / 1024
            stencil = [self.sigma(ss + j * delta) for j in (-2, -1, 0, 1, 2)]
            m2, m1, mid, p1, p2 = stencil
            second = (-m2 + 16 * m1 - 30 * mid + 16 * p1 - p2) / (12 * delta**2)
            return second / mid
        return _analytic_potential(self, ss)

    def table(self, points: int = 257) -> list[list[float]]:
        """(x, s, sigma, V) rows on an even s-grid strictly inside the window."""
        lo, hi = self.s_window
        s = np.linspace(lo, hi, points + 2)[1:-1]
        x = self.x_of_s(s)
        return [list(row) for row in zip(x.tolist(), s.tolist(), self.sigma(s).tolist(), self.potential(s).tolist())]

    def unitary(self, f, s_nodes: np.ndarray) -> np.ndarray:
        """(Uf)(s) = sigma(s) f(x(s)); ``f`` is a callable or its samples at x(s_nodes)."""
        values = f(self.x_of_s(s_nodes)) if callable(f) else np.asarray(f)
        return self.sigma(s_nodes) * values


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _closed_s(profile: CoefficientProfile, x: np.ndarray) -> np.ndarray:
    y = x + profile.offset[0]
    p = profile.params
    if profile.kind == ProfileKind.UNIFORM:
        return x / math.sqrt(p[0])
    if profile.kind == ProfileKind.EXP_DECAY:
        return (2.0 / p[0]) * np.exp(p[0] * y / 2.0)
    beta = 1.0 - p[0] / 2.0
    return np.power(y, beta) / beta


def _closed_x(profile: CoefficientProfile, s: np.ndarray) -> np.ndarray:
    p = profile.params
    off = profile.offset[0]
    if profile.kind == ProfileKind.UNIFORM:
        return s * math.sqrt(p[0])
    if profile.kind == ProfileKind.EXP_DECAY:
        return (2.0 / p[0]) * np.log(p[0] * s / 2.0) - off
    beta = 1.0 - p[0] / 2.0
    return np.power(beta * s, 1.0 / beta) - off


def _analytic_potential(tr: LiouvilleTransform, s: np.ndarray) -> np.ndarray:
    kind = tr.profile.kind
    if kind == ProfileKind.UNIFORM:
        return np.zeros_like(s)
    if kind == ProfileKind.EXP_DECAY:
        return 0.75 / s**2
    if kind == ProfileKind.POWER:
        alpha = tr.profile.params[0]
        gamma = alpha / (4.0 * (1.0 - alpha / 2.0))
        return gamma * (gamma - 1.0) / s**2
    # V = (a'' - a'^2 / (4a)) / 4 in the x variable
    x = tr.x_of_s(s)
    a = evaluate(tr.profile, x)
    a1 = derivative(tr.profile, x, 1)
    a2 = derivative(tr.profile, x, 2)
    return 0.25 * (a2 - a1**2 / (4.0 * a))


# ---------------------------------------------------------------------------
# Transform
# ---------------------------------------------------------------------------


def _padded_window(profile: CoefficientProfile, lo: float, hi: float) -> tuple[float, float]:
    pad = _PAD_FRACTION * (hi - lo)
    dom_lo, dom_hi = profile.domain[0]
    return max(lo - pad, dom_lo), min(hi + pad, dom_hi)


def transform(
    profile: CoefficientProfile,
    x_window: tuple[float, float],
    method: PotentialMethod | str = PotentialMethod.ANALYTIC,
) -> LiouvilleTransform:
    """Liouville transform of a scalar 1D profile over ``x_window``.

    Raises ``AnalyticDerivativeError`` for profiles that are not C^2, since
    sigma must be twice continuously differentiable for V to exist.
    """
    method = PotentialMethod(method)
    if profile.dim != 1 or profile.is_matrix:
        raise UnsupportedError(f"the Liouville transform needs a scalar 1D profile, not {profile.label}")
    if profile.degenerate:
        raise DegeneracyError(f"{profile.label} is degenerate; s(x) is undefined")
    if profile.smoothness < 2:
        raise AnalyticDerivativeError(f"{profile.label} is only C^{profile.smoothness}; V = sigma''/sigma needs C^2")
    lo, hi = (float(v) for v in x_window)
    if not hi > lo:
        raise ArgumentError(f"x-window upper bound {hi} must exceed lower bound {lo}")
    evaluate(profile, np.array([lo, hi]))

    if profile.kind in CLOSED_FORM_KINDS:
        tr = LiouvilleTransform(profile, (lo, hi), (0.0, 0.0), (0.0, 0.0), method)
        if profile.kind == ProfileKind.UNIFORM:
            tr.s_range = (-math.inf, math.inf)
        else:
            tr.s_range = (0.0, math.inf)
            tr.singular_points = (0.0,)
    else:
        pad_lo, pad_hi = _padded_window(profile, lo, hi)
        table = closed_metric(profile, line_grid(pad_lo, pad_hi, 8), _TABLE_RESOLUTION)
        tr = LiouvilleTransform(profile, (lo, hi), (0.0, 0.0), (0.0, 0.0), method, _table=table)
        tr.base = float(arclength(table, 0.0)) if pad_lo <= 0.0 <= pad_hi else float(arclength(table, lo))
        tr._inverse = CubicSpline(table.table_s - tr.base, table.table_x)
        bounds = ellipticity_bounds(profile, profile.domain[0])
        infinite = profile.domain[0] == (-math.inf, math.inf) and not bounds.upper_is_infinite
        tr.s_range = (-math.inf, math.inf) if infinite else (float("nan"), float("nan"))
    tr.s_window = (float(tr.s_of_x(lo)), float(tr.s_of_x(hi)))
    if math.isnan(tr.s_range[0]):
        tr.s_range = tr.s_window
    logger.info(
        "Liouville transform of %s on %s: s-window (%.6g, %.6g)%s",
        profile.label,
        tr.x_window,
        *tr.s_window,
        " (closed form)" if tr.closed_form else "",
    )
    return tr


# ---------------------------------------------------------------------------
# Schrodinger operator
# ---------------------------------------------------------------------------


def schrodinger_operator(tr: LiouvilleTransform, grid_s: Grid) -> DiscreteOperator:
    """K = -d^2/ds^2 + diag(V) with Dirichlet ends on ``grid_s``.

    Grid nodes must lie inside the transform's s-window and no singular point
    of V may sit strictly between the grid ends; a singular point at an end
    is one cell from the nearest node and is treated as Dirichlet.
    """
    if grid_s.dim != 1 or grid_s.periodic:
        raise UnsupportedError("schrodinger_operator needs a non-periodic 1D grid")
    lower, upper = grid_s.lower[0], grid_s.upper[0]
    for point in tr.singular_points:
        if lower < point < upper:
            raise SingularityError(f"V is singular at s={point}, inside the grid ({lower}, {upper})")
    nodes = grid_s.nodes()
    slack = 1e-12 * max(1.0, abs(tr.s_window[1]))
    if nodes[0] < tr.s_window[0] - slack or nodes[-1] > tr.s_window[1] + slack:
        raise DomainError(f"s-grid nodes [{nodes[0]:.6g}, {nodes[-1]:.6g}] leave the s-window {tr.s_window}")
    V = tr.potential(nodes, spacing=grid_s.spacing[0])
    if not np.all(np.isfinite(V)):
        raise SingularityError(f"V is not finite on the s-grid of {tr.profile.label}")
    laplacian = assemble(uniform(1.0), grid_s, Boundary.DIRICHLET)
    matrix = (laplacian.matrix + sp.diags(V)).tocsr()
    tag = f"K[{tr.profile.label}]"
    return DiscreteOperator(grid=grid_s, matrix=matrix, boundary=Boundary.DIRICHLET, profile_tag=tag)


# ---------------------------------------------------------------------------
# Equivalence
# ---------------------------------------------------------------------------


@dataclass
class EquivalenceReport:
    profile: str
    rows: list[list] = field(default_factory=list)
    isometry_errors: list[float] = field(default_factory=list)
    edge_mass: float = 0.0
    rtol: float = DEFAULT_TOLERANCES.equivalence_rtol
    isometry_tol: float = DEFAULT_TOLERANCES.isometry_tol

    def errors_at(self, n: int) -> np.ndarray:
        return np.array([row[4] for row in self.rows if row[0] == n])

    @property
    def finest(self) -> int:
        return max(row[0] for row in self.rows)

    @property
    def eigenvalues_agree(self) -> bool:
        return bool(np.all(self.errors_at(self.finest) < self.rtol))

    @property
    def isometry_holds(self) -> bool:
        return max(self.isometry_errors, default=0.0) <= self.isometry_tol

    @property
    def passed(self) -> bool:
        return self.eigenvalues_agree and self.isometry_holds


def _composite_gauss(lo: float, hi: float, panels: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    return points, (half[:, None] * weights[None, :]).ravel()


def isometry_errors(tr: LiouvilleTransform, count: int, rng: np.random.Generator, panels: int = 2048) -> list[float]:
    """|int |f|^2 dx - int |f(x(s))|^2 sigma^2 ds| / int |f|^2 dx for random smooth f.

    Test functions are short sine series vanishing at the window ends.
    """
    lo, hi = tr.x_window
    px, wx = _composite_gauss(lo, hi, panels)
    ps, ws = _composite_gauss(*tr.s_window, panels)
    xs = tr.x_of_s(ps)
    sigma2 = tr.sigma(ps) ** 2
    modes = np.arange(1, 5)
    errors = []
    for _ in range(count):
        c = rng.standard_normal(len(modes))

        def f(x, c=c):
            return np.sin(np.outer((x - lo) / (hi - lo), modes) * np.pi) @ c

        left = float(wx @ f(px) ** 2)
        right = float(ws @ (f(xs) ** 2 * sigma2))
        errors.append(abs(left - right) / left)
    return errors


def verify_equivalence(
    profile: CoefficientProfile,
    x_window: tuple[float, float],
    grids,
    count: int = 5,
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    samples: int = 50,
    seed: int = 0,
    method: PotentialMethod | str = PotentialMethod.ANALYTIC,
    cache=None,
) -> EquivalenceReport:
    """Compare eigenvalues of H on the x-window with those of K on the mapped s-window.

    Mismatches are reported, not raised. ``edge_mass`` is the largest
    eigenvector magnitude of K next to the s-window ends on the finest grid.
    """
    tr = transform(profile, x_window, method)
    report = EquivalenceReport(profile.label, rtol=tolerances.equivalence_rtol, isometry_tol=tolerances.isometry_tol)
    for n in sorted(int(v) for v in grids):
        H = assemble(profile, line_grid(*tr.x_window, n), Boundary.DIRICHLET)
        K = schrodinger_operator(tr, line_grid(*tr.s_window, n))
        lam_x = eigensolve(H, count, cache=cache, tolerances=tolerances).eigenvalues
        spec_s = eigensolve(K, count, cache=cache, tolerances=tolerances)
        for i, (lx, ls) in enumerate(zip(lam_x, spec_s.eigenvalues)):
            report.rows.append([n, i, float(lx), float(ls), abs(lx - ls) / max(abs(lx), 1e-300)])
        vectors = spec_s.eigenvectors
        report.edge_mass = float(np.max(np.abs(vectors[[0, -1], :])))
    report.isometry_errors = isometry_errors(tr, samples, np.random.default_rng(seed))
    if not report.passed:
        logger.warning(
            "Liouville equivalence for %s not confirmed: max error %.3g at n=%d, isometry %.3g",
            profile.label,
            float(report.errors_at(report.finest).max()),
            report.finest,
            max(report.isometry_errors, default=0.0),
        )
    return report


def transform_table(tr: LiouvilleTransform, points: int = 257) -> list[list[float]]:
    return tr.table(points)


@dataclass
class GreenComparison:
    """Entrywise comparison of (K + I)^{-1} with the free (K_0 + I)^{-1}."""

    max_excess: float
    scale: float
    potential_nonnegative: bool

    @property
    def bounded(self) -> bool:
        return self.max_excess <= 1e-12 * self.scale


def compare_green_functions(tr: LiouvilleTransform, grid_s: Grid) -> GreenComparison:
    K = schrodinger_operator(tr, grid_s)
    free = assemble(uniform(1.0), grid_s, Boundary.DIRICHLET)
    green = resolvent(K, 1.0)
    green_free = resolvent(free, 1.0)
    V = K.matrix.diagonal() - free.matrix.diagonal()
    return GreenComparison(
        max_excess=float(np.max(green - green_free)),
        scale=float(np.max(np.abs(green_free))),
        potential_nonnegative=bool(np.all(V >= 0)),
    )
