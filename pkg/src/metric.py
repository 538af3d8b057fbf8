"""The coefficient metric ds = a^{-1/2} dx and heat-kernel decay audits.

Two realizations share one interface: ``Closed1D`` integrates a^{-1/2}
with Gauss-Legendre quadrature into a cumulative table, ``GraphND`` runs
Dijkstra on the grid graph whose edge lengths are sqrt(e^T a^{-1} e).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.csgraph import dijkstra
from scipy.stats import linregress

from src.coefficients import CoefficientProfile, evaluate
from src.config import DEFAULT_TOLERANCES, Tolerances
from src.discretize import DiscreteOperator, Grid
from src.errors import ArgumentError, DomainError
from src.spectral import heat, opnorm

logger = logging.getLogger(__name__)

HEAT_AUDIT_COLUMNS = ["E_id", "F_id", "t", "measured", "bound", "ratio", "pass"]
BLOCK_DECAY_COLUMNS = ["r", "mu", "bound", "pass"]

_GAUSS_ORDER = 8


class MetricMode(Enum):
    CLOSED_1D = "Closed1D"
    GRAPH_ND = "GraphND"


@dataclass(frozen=True)
class NodeSet:
    """Named set of grid node indices."""

    name: str
    indices: np.ndarray = field(compare=False)


@dataclass(eq=False)
class MetricField:
    mode: MetricMode
    resolution: int
    profile: CoefficientProfile
    grid: Grid
    table_x: np.ndarray | None = None
    table_s: np.ndarray | None = None
    graph: sp.csr_matrix | None = None

    @property
    def node_coordinates(self) -> np.ndarray:
        return self.grid.nodes()


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def closed_metric(profile: CoefficientProfile, grid: Grid, resolution: int = 4096) -> MetricField:
    """Cumulative table of s(x) = int a^{-1/2} over the closed grid box."""
    if grid.dim != 1 or profile.is_matrix:
        raise ArgumentError("Closed1D metrics need a scalar profile on a 1D grid")
    lo, hi = grid.lower[0], grid.upper[0]
    edges = np.linspace(lo, hi, resolution + 1)
    nodes, weights = leggauss(_GAUSS_ORDER)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    points = mid[:, None] + half[:, None] * nodes[None, :]
    cell_integrals = half * (evaluate(profile, points) ** -0.5 @ weights)
    table_s = np.concatenate([[0.0], np.cumsum(cell_integrals)])
    return MetricField(MetricMode.CLOSED_1D, resolution, profile, grid, table_x=edges, table_s=table_s)


def _edge_offsets(dim: int) -> list[tuple[int, ...]]:
    if dim == 1:
        return [(1,)]
    # 8-neighbour stencil: each undirected edge listed once
    return [(1, 0), (0, 1), (1, 1), (1, -1)]


def graph_metric(profile: CoefficientProfile, grid: Grid) -> MetricField:
    """Grid graph with edge length sqrt(e^T a(midpoint)^{-1} e)."""
    coords = grid.nodes().reshape(grid.size, grid.dim)
    shape = grid.points
    index = np.arange(grid.size).reshape(shape)
    rows, cols, lengths = [], [], []
    for offset in _edge_offsets(grid.dim):
        src = index
        dst_slices_src, dst_slices_dst = [], []
        for axis, o in enumerate(offset):
            n = shape[axis]
            if o >= 0:
                dst_slices_src.append(slice(0, n - o))
                dst_slices_dst.append(slice(o, n))
            else:
                dst_slices_src.append(slice(-o, n))
                dst_slices_dst.append(slice(0, n + o))
        a_idx = src[tuple(dst_slices_src)].ravel()
        b_idx = src[tuple(dst_slices_dst)].ravel()
        disp = coords[b_idx] - coords[a_idx]
        mids = 0.5 * (coords[a_idx] + coords[b_idx])
        if grid.dim == 1:
            length = np.abs(disp[:, 0]) / np.sqrt(evaluate(profile, mids[:, 0]))
        else:
            a = evaluate(profile, mids)
            if profile.is_matrix:
                solved = np.linalg.solve(a, disp[..., None])[..., 0]
                length = np.sqrt(np.einsum("ij,ij->i", disp, solved))
            else:
                length = np.linalg.norm(disp, axis=1) / np.sqrt(a)
        rows.append(a_idx)
        cols.append(b_idx)
        lengths.append(length)
    graph = sp.csr_matrix(
        (np.concatenate(lengths), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
    )
    return MetricField(MetricMode.GRAPH_ND, grid.size, profile, grid, graph=graph)


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def arclength(metric: MetricField, x) -> np.ndarray:
    """s(x) relative to the left end of the box (Closed1D only)."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = metric.table_x[0], metric.table_x[-1]
    if np.any((xs < lo) | (xs > hi)):
        raise DomainError(f"points outside the metric box [{lo}, {hi}]")
    k = np.clip(np.searchsorted(metric.table_x, xs, side="right") - 1, 0, len(metric.table_x) - 2)
    left = metric.table_x[k]
    half = 0.5 * (xs - left)
    partial = np.zeros_like(xs)
    moved = half > 0
    if np.any(moved):
        nodes, weights = leggauss(_GAUSS_ORDER)
        points = (0.5 * (xs + left))[moved][:, None] + half[moved][:, None] * nodes
        partial[moved] = half[moved] * (evaluate(metric.profile, points) ** -0.5 @ weights)
    return (metric.table_s[k] + partial).reshape(np.shape(x))


def _nearest_node(metric: MetricField, x) -> int:
    coords = metric.node_coordinates.reshape(metric.grid.size, metric.grid.dim)
    point = np.atleast_1d(np.asarray(x, dtype=float))
    return int(np.argmin(np.sum((coords - point) ** 2, axis=1)))


def distance(metric: MetricField, x, y) -> float:
    if metric.mode == MetricMode.CLOSED_1D:
        sx, sy = arclength(metric, [x, y])
        return float(abs(sy - sx))
    i, j = _nearest_node(metric, x), _nearest_node(metric, y)
    return float(dijkstra(metric.graph, directed=False, indices=i)[j])


def node_arclength(metric: MetricField) -> np.ndarray:
    return arclength(metric, metric.grid.nodes())


def node_distances(metric: MetricField, index: int) -> np.ndarray:
    """d(x_j, x_index) for every node j."""
    if metric.mode == MetricMode.CLOSED_1D:
        s = node_arclength(metric)
        return np.abs(s - s[index])
    return dijkstra(metric.graph, directed=False, indices=index)


def pairwise_node_distances(metric: MetricField) -> np.ndarray:
    if metric.mode == MetricMode.CLOSED_1D:
        s = node_arclength(metric)
        return np.abs(s[:, None] - s[None, :])
    return dijkstra(metric.graph, directed=False)


def set_distance(metric: MetricField, E, F) -> float:
    """inf of d(x, y) over node sets E and F (index arrays or NodeSets)."""
    e = np.asarray(E.indices if isinstance(E, NodeSet) else E, dtype=int)
    f = np.asarray(F.indices if isinstance(F, NodeSet) else F, dtype=int)
    if e.size == 0 or f.size == 0:
        raise ArgumentError("set_distance needs nonempty node sets")
    if np.intersect1d(e, f).size:
        return 0.0
    if metric.mode == MetricMode.CLOSED_1D:
        s = node_arclength(metric)
        se, sf = np.sort(s[e]), s[f]
        pos = np.searchsorted(se, sf)
        below = np.clip(pos - 1, 0, len(se) - 1)
        above = np.clip(pos, 0, len(se) - 1)
        return float(np.minimum(np.abs(se[below] - sf), np.abs(se[above] - sf)).min())
    dist = dijkstra(metric.graph, directed=False, indices=e, min_only=True)
    return float(dist[f].min())


def nodes_in(grid: Grid, lower, upper, name: str = "") -> NodeSet:
    """Nodes inside the closed box [lower, upper] (1e-9 slack for roundoff)."""
    coords = grid.nodes().reshape(grid.size, grid.dim)
    lo = np.atleast_1d(np.asarray(lower, dtype=float)) - 1e-9
    hi = np.atleast_1d(np.asarray(upper, dtype=float)) + 1e-9
    inside = np.all((coords >= lo) & (coords <= hi), axis=1)
    return NodeSet(name or f"[{lower},{upper}]", np.flatnonzero(inside))


def random_disjoint_pairs(grid: Grid, count: int, rng: np.random.Generator, max_length: float = 1.0):
    """Pairs of disjoint random intervals inside a 1D grid box."""
    lo, hi = grid.lower[0], grid.upper[0]
    h = grid.spacing[0]
    pairs = []
    while len(pairs) < count:
        a, b, c, d = np.sort(rng.uniform(lo + h, hi - h, size=4))
        if b - a > max_length or d - c > max_length or c - b < 2 * h:
            continue
        i = len(pairs)
        E = nodes_in(grid, a, b, name=f"E{i}")
        F = nodes_in(grid, c, d, name=f"F{i}")
        if E.indices.size and F.indices.size:
            pairs.append((E, F) if rng.random() < 0.5 else (F, E))
    return pairs


# ---------------------------------------------------------------------------
# Heat-bound audit
# ---------------------------------------------------------------------------


@dataclass
class HeatBoundAudit:
    rows: list[list] = field(default_factory=list)

    @property
    def violations(self) -> list[list]:
        return [row for row in self.rows if not row[6]]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_heat_bound(
    op: DiscreteOperator,
    metric: MetricField,
    pairs,
    t_list,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> HeatBoundAudit:
    """Audit ||P_E e^{-tH} P_F|| <= exp(-d(E, F)^2 / 4t) up to the discretization slack."""
    audit = HeatBoundAudit()
    distances = [set_distance(metric, E, F) for E, F in pairs]
    for t in t_list:
        kernel = heat(op, t)
        for (E, F), d in zip(pairs, distances):
            measured = opnorm(kernel[np.ix_(E.indices, F.indices)])
            bound = math.exp(-(d**2) / (4 * t))
            ratio = measured / bound if bound > 0 else math.inf
            ok = measured <= bound * (1 + tolerances.heat_slack) + tolerances.noise_floor
            audit.rows.append([E.name, F.name, float(t), measured, bound, ratio, ok])
            if not ok:
                logger.warning(
                    "Heat bound violated for (%s, %s) at t=%g: %.4g > %.4g", E.name, F.name, t, measured, bound
                )
    logger.info("Heat audit on %s: %d rows, %d violation(s)", op.profile_tag, len(audit.rows), len(audit.violations))
    return audit


# ---------------------------------------------------------------------------
# Cube partition and block decay
# ---------------------------------------------------------------------------


@dataclass
class CubePartition:
    """Unit cubes centred at lattice points, each holding its grid nodes."""

    centers: list[tuple[int, ...]]
    blocks: list[np.ndarray]

    @property
    def dim(self) -> int:
        return len(self.centers[0]) if self.centers else 1


def cube_partition(grid: Grid) -> CubePartition:
    coords = grid.nodes().reshape(grid.size, grid.dim)
    labels = np.round(coords).astype(int)
    keys, inverse = np.unique(labels, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    blocks = [np.flatnonzero(inverse == i) for i in range(len(keys))]
    return CubePartition([tuple(int(v) for v in key) for key in keys], blocks)


def block_norms(A: np.ndarray, partition: CubePartition) -> dict[tuple[int, ...], float]:
    """mu(r) = max over n - m = r of ||P_m A P_n||."""
    mu: dict[tuple[int, ...], float] = {}
    for m, bm in zip(partition.centers, partition.blocks):
        for n, bn in zip(partition.centers, partition.blocks):
            r = tuple(b - a for a, b in zip(m, n))
            value = opnorm(A[np.ix_(bm, bn)])
            if value > mu.get(r, -1.0):
                mu[r] = value
    return mu


@dataclass
class TailFit:
    c: float
    k: float
    r_squared: float
    points: int


def fit_block_tail(radii, mu, t: float, floor: float = DEFAULT_TOLERANCES.noise_floor) -> TailFit:
    """Regress sqrt(-log mu) on |r|: slope 1/sqrt(4ct), intercept -k/sqrt(4ct)."""
    r = np.asarray(radii, dtype=float)
    m = np.asarray(mu, dtype=float)
    keep = (r >= 1) & (m > floor) & (m < 1)
    if keep.sum() < 3:
        raise ArgumentError(f"tail fit needs at least 3 decaying blocks above the noise floor, got {keep.sum()}")
    fit = linregress(r[keep], np.sqrt(-np.log(m[keep])))
    c = 1.0 / (4 * t * fit.slope**2)
    k = -fit.intercept / fit.slope
    return TailFit(c=float(c), k=float(k), r_squared=float(fit.rvalue**2), points=int(keep.sum()))


@dataclass
class BlockDecay:
    t: float
    c: float
    k_declared: float
    k_fitted: float
    rows: list[list]
    tail: TailFit | None

    @property
    def passed(self) -> bool:
        return all(row[3] for row in self.rows)


def block_heat_decay(
    op: DiscreteOperator,
    partition: CubePartition,
    t: float,
    c: float,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> BlockDecay:
    """mu(r) for e^{-tH} against exp(-(|r| - k)^2 / 4ct) with k = sqrt(N).

    ``c`` is the upper ellipticity bound. The fitted k is the smallest
    constant for which every measured mu(r) satisfies the bound.
    """
    mu = block_norms(heat(op, t), partition)
    k = math.sqrt(partition.dim)
    rows, k_fit = [], 0.0
    for r in sorted(mu, key=lambda v: (float(np.linalg.norm(v)), v)):
        size = float(np.linalg.norm(r))
        excess = max(size - k, 0.0)
        bound = math.exp(-(excess**2) / (4 * c * t))
        ok = mu[r] <= bound * (1 + tolerances.heat_slack) + tolerances.noise_floor
        rows.append([r if len(r) > 1 else r[0], mu[r], bound, ok])
        if tolerances.noise_floor < mu[r] < 1:
            k_fit = max(k_fit, size - math.sqrt(-4 * c * t * math.log(mu[r])))
    radial: dict[float, float] = {}
    for r, value in mu.items():
        size = float(np.linalg.norm(r))
        radial[size] = max(radial.get(size, 0.0), value)
    try:
        tail = fit_block_tail(list(radial), list(radial.values()), t, tolerances.noise_floor)
    except ArgumentError as e:
        logger.warning("Block tail fit skipped: %s", e)
        tail = None
    return BlockDecay(t=t, c=c, k_declared=k, k_fitted=k_fit, rows=rows, tail=tail)
