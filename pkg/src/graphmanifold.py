"""Weighted graphs as stand-ins for non-compact manifolds.

A graph carries a vertex measure mu, edge lengths (shortest paths give the
metric) and edge conductances w. The Laplacian L_mu acts on L^2(mu) through
the form sum over edges of w_uv (f(u) - f(v))^2; heat kernels are densities
with respect to mu. Estimates skip balls that reach the patch boundary.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.stats import linregress

from src.config import DEFAULT_TOLERANCES
from src.errors import ArgumentError
from src.spectral import opnorm

logger = logging.getLogger(__name__)

DOUBLING_COLUMNS = ["center", "r", "ratio"]
POINCARE_COLUMNS = ["center", "r", "quotient"]
KERNEL_AUDIT_COLUMNS = ["t", "calibration_t", "constant", "exponent", "max_ratio", "violations", "pairs"]
HOLDER_SCAN_COLUMNS = ["alpha", "constant", "max_ratio"]
TRUNCATION_COLUMNS = ["r", "error", "schur_bound"]

KERNEL_FLOOR = 1e-12
_RADIUS_SLACK = 1e-9


@dataclass(eq=False)
class WeightedGraph:
    """Connected graph with vertex measure, edge lengths and conductances."""

    measure: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray
    weights: np.ndarray
    coords: np.ndarray | None = None
    name: str = "graph"
    _distances: np.ndarray | None = field(default=None, repr=False)
    _eigen: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.measure)

    def length_matrix(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.concatenate([self.lengths, self.lengths])
        return sp.csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(self.size, self.size))

    def energy_matrix(self, vertices: np.ndarray | None = None) -> np.ndarray:
        """K with f^T K f = sum over edges (inside ``vertices``) of w (f(u) - f(v))^2."""
        keep = np.ones(self.size, dtype=bool) if vertices is None else np.isin(np.arange(self.size), vertices)
        inside = keep[self.edges[:, 0]] & keep[self.edges[:, 1]]
        u, v, w = self.edges[inside, 0], self.edges[inside, 1], self.weights[inside]
        n = self.size
        K = sp.csr_matrix((-w, (u, v)), shape=(n, n))
        K = K + K.T
        K = K - sp.diags(np.asarray(K.sum(axis=1)).ravel())
        return K.toarray()

    def laplacian(self) -> np.ndarray:
        """Symmetrized L_mu = M^{-1/2} K M^{-1/2}, unitarily equivalent to the operator on L^2(mu)."""
        scale = 1.0 / np.sqrt(self.measure)
        return scale[:, None] * self.energy_matrix() * scale[None, :]

    def distances(self) -> np.ndarray:
        if self._distances is None:
            self._distances = dijkstra(self.length_matrix(), directed=False)
        return self._distances

    def eigen(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eigen is None:
            self._eigen = scipy.linalg.eigh(self.laplacian())
        return self._eigen

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.size)

    def boundary(self) -> np.ndarray:
        """Vertices with fewer neighbours than the most connected vertex."""
        deg = self.degrees()
        return np.flatnonzero(deg < deg.max())

    def ball(self, x: int, r: float) -> np.ndarray:
        return np.flatnonzero(self.distances()[x] <= r + _RADIUS_SLACK)

    def volume(self, x: int, r: float) -> float:
        return float(self.measure[self.ball(x, r)].sum())

    def boundary_distance(self) -> np.ndarray:
        edge = self.boundary()
        if edge.size == 0:
            return np.full(self.size, math.inf)
        return self.distances()[:, edge].min(axis=1)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def from_edges(measure, edges, lengths, weights=None, coords=None, name: str = "graph") -> WeightedGraph:
    measure = np.asarray(measure, dtype=float)
    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    lengths = np.asarray(lengths, dtype=float)
    weights = 1.0 / lengths**2 if weights is None else np.asarray(weights, dtype=float)
    if measure.ndim != 1 or measure.size == 0 or np.any(measure <= 0):
        raise ArgumentError("vertex measure must be a nonempty positive array")
    if lengths.shape != (len(edges),) or weights.shape != (len(edges),):
        raise ArgumentError("edge lengths and weights need one entry per edge")
    if np.any(lengths <= 0) or np.any(weights <= 0):
        raise ArgumentError("edge lengths and weights must be positive")
    if edges.size and (edges.min() < 0 or edges.max() >= measure.size):
        raise ArgumentError("edges reference vertices outside the measure array")
    graph = WeightedGraph(measure, edges, lengths, weights, coords, name)
    count, labels = connected_components(graph.length_matrix(), directed=False)
    if count != 1:
        stray = int(np.flatnonzero(labels != labels[0])[0])
        raise ArgumentError(f"graph '{name}' is disconnected: {count} components (vertex {stray} is unreachable)")
    return graph


def lattice_graph(shape, spacing: float = 1.0, measure=None, name: str = "") -> WeightedGraph:
    """Rectangular lattice patch with nearest-neighbour edges.

    ``measure`` maps the (n, dim) coordinate array to vertex masses; the
    default is spacing^dim on every vertex.
    """
    shape = tuple(int(v) for v in np.atleast_1d(shape))
    if len(shape) not in (1, 2) or min(shape) < 2:
        raise ArgumentError(f"lattice shape must be 1D or 2D with at least 2 points per axis, got {shape}")
    index = np.arange(int(np.prod(shape))).reshape(shape)
    axes = [np.arange(n) * spacing for n in shape]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(shape))
    edges = []
    for axis in range(len(shape)):
        lo = [slice(None)] * len(shape)
        hi = [slice(None)] * len(shape)
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        edges.append(np.column_stack([index[tuple(lo)].ravel(), index[tuple(hi)].ravel()]))
    edges = np.concatenate(edges)
    mass = np.full(len(coords), spacing ** len(shape)) if measure is None else np.asarray(measure(coords), dtype=float)
    lengths = np.full(len(edges), float(spacing))
    label = name or f"lattice{shape}"
    return from_edges(mass, edges, lengths, coords=coords, name=label)


def half_plane_measure(factor: float = 2.0, axis: int = 0):
    """Measure equal to ``factor`` on the upper half of ``axis`` and 1 below."""

    def measure(coords: np.ndarray) -> np.ndarray:
        c = coords[:, axis]
        middle = 0.5 * (c.min() + c.max())
        return np.where(c >= middle, factor, 1.0)

    return measure


def path_graph(n: int, spacing: float = 1.0) -> WeightedGraph:
    return lattice_graph((n,), spacing, name=f"path{n}")


def tree_graph(branching: int, depth: int) -> WeightedGraph:
    """Complete tree with unit edges; volumes grow exponentially, so doubling fails."""
    if branching < 2 or depth < 1:
        raise ArgumentError("tree_graph needs branching >= 2 and depth >= 1")
    edges, frontier, count = [], [0], 1
    for _ in range(depth):
        nxt = []
        for parent in frontier:
            for _ in range(branching):
                edges.append((parent, count))
                nxt.append(count)
                count += 1
        frontier = nxt
    return from_edges(np.ones(count), edges, np.ones(len(edges)), name=f"tree{branching}^{depth}")


GRAPH_KEYS = {"kind", "shape", "spacing", "measure", "measure_factor", "branching", "depth", "n"}


def build_graph(spec: dict) -> WeightedGraph:
    """Graph from its run-config mapping (kind: lattice, path or tree)."""
    unknown = set(spec) - GRAPH_KEYS
    if unknown:
        raise ArgumentError(f"Unknown graph key '{sorted(unknown)[0]}'")
    kind = spec.get("kind", "lattice")
    if kind == "lattice":
        measure = None
        if spec.get("measure", "uniform") == "half_plane":
            measure = half_plane_measure(float(spec.get("measure_factor", 2.0)))
        elif spec.get("measure", "uniform") != "uniform":
            raise ArgumentError(f"Unknown graph measure '{spec['measure']}'")
        return lattice_graph(spec.get("shape", (21, 21)), float(spec.get("spacing", 1.0)), measure)
    if kind == "path":
        return path_graph(int(spec.get("n", 64)), float(spec.get("spacing", 1.0)))
    if kind == "tree":
        return tree_graph(int(spec.get("branching", 2)), int(spec.get("depth", 6)))
    raise ArgumentError(f"Unknown graph kind '{kind}'")


# ---------------------------------------------------------------------------
# Heat kernel
# ---------------------------------------------------------------------------


def heat_kernel(g: WeightedGraph, t: float) -> np.ndarray:
    """h_t(x, y): density of e^{-t L_mu} with respect to mu, symmetric in x and y."""
    if t <= 0:
        raise ArgumentError(f"heat_kernel needs t > 0, got {t}")
    values, vectors = g.eigen()
    semigroup = (vectors * np.exp(-t * values)) @ vectors.T
    scale = 1.0 / np.sqrt(g.measure)
    kernel = scale[:, None] * semigroup * scale[None, :]
    return 0.5 * (kernel + kernel.T)


def _interior_centers(g: WeightedGraph, reach: float, centers, limit: int) -> np.ndarray:
    pool = np.arange(g.size) if centers is None else np.asarray(centers, dtype=int)
    pool = pool[g.boundary_distance()[pool] > reach + _RADIUS_SLACK]
    if pool.size > limit:
        pool = pool[np.linspace(0, pool.size - 1, limit).round().astype(int)]
    return pool


# ---------------------------------------------------------------------------
# Doubling and Poincare constants
# ---------------------------------------------------------------------------


@dataclass
class ConstantEstimate:
    value: float
    rows: list[list] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def inconclusive(self) -> bool:
        return not self.rows


def doubling_constant(g: WeightedGraph, radii, centers=None, samples: int = 64) -> ConstantEstimate:
    """D = max V_x(2r) / V_x(r) over centres whose ball B_x(2r) misses the boundary."""
    estimate = ConstantEstimate(math.nan)
    for r in sorted(float(v) for v in radii):
        pool = _interior_centers(g, 2 * r, centers, samples)
        if pool.size == 0:
            estimate.notes.append(f"r={r}: every ball B_x(2r) reaches the boundary")
            continue
        for x in pool:
            estimate.rows.append([int(x), r, g.volume(x, 2 * r) / g.volume(x, r)])
    if estimate.rows:
        estimate.value = max(row[2] for row in estimate.rows)
    else:
        logger.warning("Doubling estimate on %s is inconclusive: all balls are boundary-affected", g.name)
    return estimate


def poincare_quotient(g: WeightedGraph, x: int, r: float) -> float:
    """max over f of sum_{B(r)} |f - f_B|^2 mu / (r^2 * energy of f on B(2r))."""
    inner, outer = g.ball(x, r), g.ball(x, 2 * r)
    if inner.size < 2:
        return 0.0
    local = {v: i for i, v in enumerate(outer)}
    rows = np.array([local[v] for v in inner])
    mu_inner = g.measure[inner]
    # projection f -> (f - f_B) on B(r), weighted by mu
    proj = np.zeros((inner.size, outer.size))
    proj[np.arange(inner.size), rows] = 1.0
    mean_row = np.zeros(outer.size)
    mean_row[rows] = mu_inner / mu_inner.sum()
    proj -= np.outer(np.ones(inner.size), mean_row)
    lhs = proj.T @ (mu_inner[:, None] * proj)
    energy = g.energy_matrix(outer)[np.ix_(outer, outer)]
    # constants lie in the kernel of both forms
    basis = scipy.linalg.null_space(np.ones((1, outer.size)))
    values = scipy.linalg.eigh(basis.T @ lhs @ basis, r**2 * (basis.T @ energy @ basis), eigvals_only=True)
    return float(values[-1])


def poincare_constant(g: WeightedGraph, radii, centers=None, samples: int = 32) -> ConstantEstimate:
    """P = max of the local variational quotients over interior centres and radii."""
    estimate = ConstantEstimate(math.nan)
    for r in sorted(float(v) for v in radii):
        pool = _interior_centers(g, 2 * r, centers, samples)
        if pool.size == 0:
            estimate.notes.append(f"r={r}: every ball B_x(2r) reaches the boundary")
        for x in pool:
            try:
                estimate.rows.append([int(x), r, poincare_quotient(g, int(x), r)])
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as e:
                estimate.notes.append(f"x={int(x)} r={r}: singular local problem ({e})")
    if estimate.rows:
        estimate.value = max(row[2] for row in estimate.rows)
    return estimate


# ---------------------------------------------------------------------------
# Kernel audits
# ---------------------------------------------------------------------------


@dataclass
class KernelAudit:
    """A kernel bound with its constants, audited at ``t``.

    ``calibration_t`` is the time the constants were fixed at. When it equals
    ``t`` the constants are a fit and ``max_ratio`` is 1 by construction.
    """

    t: float
    constant: float
    exponent: float
    max_ratio: float
    violations: list[list] = field(default_factory=list)
    pairs: int = 0
    calibration_t: float = math.nan
    margin: float = 1.0
    fitted_constant: float = math.nan
    scan: list[list] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.pairs > 0 and self.exponent > 0 and not self.violations

    def row(self) -> list:
        return [
            self.t,
            self.calibration_t,
            self.constant,
            self.exponent,
            self.max_ratio,
            len(self.violations),
            self.pairs,
        ]


def _check_margin(margin: float) -> float:
    if not margin > 0:
        raise ArgumentError(f"audit margin must be positive, got {margin}")
    return float(margin) * (1 + 1e-9)


def gaussian_fit(
    g: WeightedGraph,
    t: float,
    floor: float = KERNEL_FLOOR,
    *,
    constant: float | None = None,
    exponent: float | None = None,
    calibration_t: float = math.nan,
    margin: float = 1.0,
) -> KernelAudit:
    """Fit or audit h_t(x, y) <= C V_x(sqrt t)^{-1} exp(-a d(x, y)^2 / t).

    Without ``constant`` and ``exponent``, ``a`` is the least-squares slope of
    log(h V) against -d^2/t over pairs above ``floor`` and C is the smallest
    constant making the bound hold on those pairs; the least-squares constant
    is kept for comparison. With both given the bound is audited as is, and
    pairs whose ratio to it exceeds ``margin`` are violations.
    """
    if (constant is None) != (exponent is None):
        raise ArgumentError("gaussian_fit needs both constant and exponent, or neither")
    limit = _check_margin(margin)
    h = heat_kernel(g, t)
    d = g.distances()
    root = math.sqrt(t)
    volumes = np.array([g.volume(x, root) for x in range(g.size)])
    mask = h > floor
    fitted_constant = math.nan
    if constant is None:
        y = (np.log(np.where(mask, h, 1.0)) + np.log(volumes)[:, None])[mask]
        X = (-(d**2) / t)[mask]
        if np.ptp(X) == 0:
            raise ArgumentError("gaussian_fit needs pairs at more than one distance")
        fit = linregress(X, y)
        exponent = float(fit.slope)
        constant = math.exp(float(np.max(y - exponent * X)))
        fitted_constant = math.exp(float(fit.intercept))
        calibration_t = t
    bound = constant / volumes[:, None] * np.exp(-exponent * d**2 / t)
    ratio = h / bound
    violations = [
        [int(i), int(j), float(h[i, j]), float(bound[i, j])] for i, j in zip(*np.nonzero(mask & (ratio > limit)))
    ]
    audit = KernelAudit(
        t=t,
        constant=float(constant),
        exponent=float(exponent),
        max_ratio=float(ratio[mask].max()),
        violations=violations,
        pairs=int(mask.sum()),
        calibration_t=calibration_t,
        margin=margin,
        fitted_constant=fitted_constant,
    )
    logger.info(
        "Gaussian bound on %s at t=%g: C=%.4g a=%.4g max ratio %.3g over %d pairs",
        g.name,
        t,
        audit.constant,
        audit.exponent,
        audit.max_ratio,
        audit.pairs,
    )
    return audit


def gaussian_audit(
    g: WeightedGraph,
    t_list,
    floor: float = KERNEL_FLOOR,
    margin: float = DEFAULT_TOLERANCES.kernel_margin,
) -> list[KernelAudit]:
    """Fit (C, a) at the smallest t and audit every other t against those constants."""
    times = sorted(float(t) for t in t_list)
    if not times:
        raise ArgumentError("gaussian_audit needs at least one time")
    calibration = gaussian_fit(g, times[0], floor)
    audits = [calibration]
    for t in times[1:]:
        audits.append(
            gaussian_fit(
                g,
                t,
                floor,
                constant=calibration.constant,
                exponent=calibration.exponent,
                calibration_t=calibration.t,
                margin=margin,
            )
        )
    return audits


def _holder_triples(g: WeightedGraph, centers, reach: float):
    d = g.distances()
    xs, ys, zs = [], [], []
    for x in centers:
        for y in range(g.size):
            near = np.flatnonzero((d[y] <= reach + _RADIUS_SLACK) & (d[y] > 0))
            xs.append(np.full(near.size, x))
            ys.append(np.full(near.size, y))
            zs.append(near)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(zs)


@dataclass
class _HolderTerms:
    time: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    lhs: np.ndarray
    dyz: np.ndarray
    h2: np.ndarray | None

    def ratios(self, alpha: float) -> np.ndarray:
        rhs = self.dyz**alpha
        if self.h2 is not None:
            rhs = rhs * self.time ** (-alpha / 2) * self.h2
        return self.lhs / rhs


def _holder_terms(g: WeightedGraph, time: float, pool: np.ndarray, relative: bool, floor: float) -> _HolderTerms:
    h = heat_kernel(g, time)
    x, y, z = _holder_triples(g, pool, math.sqrt(time) if relative else 1.0)
    terms = _HolderTerms(time, x, y, z, np.abs(h[x, y] - h[x, z]), g.distances()[y, z], None)
    if relative:
        h2 = heat_kernel(g, 2 * time)[x, y]
        keep = h2 > floor
        terms = _HolderTerms(time, x[keep], y[keep], z[keep], terms.lhs[keep], terms.dyz[keep], h2[keep])
    return terms


def holder_audit(
    g: WeightedGraph,
    t: float,
    alphas=None,
    *,
    audit_t: float | None = None,
    margin: float = DEFAULT_TOLERANCES.kernel_margin,
    relative: bool = True,
    centers=None,
    samples: int = 16,
    floor: float = KERNEL_FLOOR,
) -> KernelAudit:
    """Calibrate |h_t(x,y) - h_t(x,z)| <= C t^{-alpha/2} d(y,z)^alpha h_2t(x,y) at ``t``, audit at ``audit_t``.

    Triples are restricted to d(y, z) <= sqrt(t). With ``relative=False`` the
    plain bound C d(y,z)^alpha over d(y, z) <= 1 is used instead. Each alpha
    on the scan gets the smallest C that holds at ``t``; that C is then
    checked at ``audit_t`` (default 2t). The reported exponent is the largest
    alpha whose ratio there stays within ``margin``, or the alpha with the
    smallest ratio when none does. Without triples at either time the audit
    reports zero pairs and does not pass.
    """
    alphas = np.linspace(0.1, 1.0, 10) if alphas is None else np.asarray(alphas, dtype=float)
    if alphas.size == 0 or np.any((alphas <= 0) | (alphas > 1)):
        raise ArgumentError("holder exponents must lie in (0, 1]")
    limit = _check_margin(margin)
    audit_t = 2 * t if audit_t is None else float(audit_t)
    pool = np.arange(g.size) if centers is None else np.asarray(centers, dtype=int)
    if pool.size > samples:
        pool = pool[np.linspace(0, pool.size - 1, samples).round().astype(int)]
    if pool.size == 0:
        raise ArgumentError("holder_audit needs at least one centre")
    calibration = _holder_terms(g, t, pool, relative, floor)
    check = _holder_terms(g, audit_t, pool, relative, floor)
    if calibration.lhs.size == 0 or check.lhs.size == 0:
        logger.warning(
            "Holder audit on %s is inconclusive: no triples within reach at t=%g or t=%g", g.name, t, audit_t
        )
        return KernelAudit(
            t=audit_t, constant=math.nan, exponent=math.nan, max_ratio=math.nan, calibration_t=t, margin=margin
        )

    scan = []
    for alpha in alphas:
        c = float(np.max(calibration.ratios(alpha)))
        worst = float(np.max(check.ratios(alpha))) / c if c > 0 else math.inf
        scan.append([float(alpha), c, worst])
    admissible = [row for row in scan if row[2] <= limit]
    alpha, c, worst = max(admissible, key=lambda row: row[0]) if admissible else min(scan, key=lambda row: row[2])
    ratios = check.ratios(alpha) / c if c > 0 else np.full(check.lhs.size, math.inf)
    violations = [
        [int(check.x[i]), int(check.y[i]), int(check.z[i]), float(ratios[i])] for i in np.flatnonzero(ratios > limit)
    ]
    audit = KernelAudit(
        t=audit_t,
        constant=c,
        exponent=alpha,
        max_ratio=worst,
        violations=violations,
        pairs=int(check.lhs.size),
        calibration_t=t,
        margin=margin,
        scan=scan,
    )
    logger.info(
        "Holder audit on %s: alpha=%.2f C=%.4g from t=%g, max ratio %.3g at t=%g",
        g.name,
        alpha,
        c,
        t,
        worst,
        audit_t,
    )
    return audit


# ---------------------------------------------------------------------------
# Kernel truncation
# ---------------------------------------------------------------------------


def cutoff(d: np.ndarray, r: float) -> np.ndarray:
    """theta = 1 on [0, r], 0 beyond r + 1, linear in between."""
    return np.clip(r + 1.0 - d, 0.0, 1.0)


@dataclass
class TruncationFit:
    t: float
    rows: list[list]
    constant: float
    exponent: float
    r_squared: float

    @property
    def monotone(self) -> bool:
        errors = [row[1] for row in self.rows]
        return all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(errors, errors[1:]))

    @property
    def within_schur(self) -> bool:
        return all(row[1] <= row[2] * (1 + 1e-9) + 1e-15 for row in self.rows)


def truncation_error(
    g: WeightedGraph, radii, t: float = 1.0, floor: float = DEFAULT_TOLERANCES.noise_floor
) -> TruncationFit:
    """||e^{-t L_mu} - Op(h theta_r(d))|| in L^2(mu) per r, with a fit error ~ K exp(-a r^2 / 2)."""
    h = heat_kernel(g, t)
    d = g.distances()
    root = np.sqrt(g.measure)
    rows = []
    for r in sorted(float(v) for v in radii):
        tail = h * (1.0 - cutoff(d, r))
        # symmetric form of Op(k): M^{1/2} k M^{1/2}
        error = opnorm(root[:, None] * tail * root[None, :])
        schur = float(np.max((h * (d >= r - _RADIUS_SLACK)) @ g.measure))
        rows.append([r, error, schur])
    usable = [(r, e) for r, e, _ in rows if e > floor]
    if len(usable) >= 2:
        rs, es = (np.array(v) for v in zip(*usable))
        fit = linregress(rs**2, np.log(es))
        constant, exponent, r2 = math.exp(float(fit.intercept)), -2.0 * float(fit.slope), float(fit.rvalue**2)
    else:
        constant, exponent, r2 = math.nan, math.nan, math.nan
    logger.info("Truncation on %s at t=%g: a=%.4g R^2=%.4f", g.name, t, exponent, r2)
    return TruncationFit(t, rows, constant, exponent, r2)
