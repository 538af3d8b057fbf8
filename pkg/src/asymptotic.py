"""Asymptotic operators and the essential spectrum they predict.

Limit profiles come from ``coefficients.asymptotic_limits`` or from the run
configuration; translates are never taken numerically. Constant limits have
spectrum [0, inf), periodic limits are resolved into Floquet bands, and any
other limit goes through the box estimator of the spectral module.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from src.coefficients import CoefficientProfile, ProfileKind, asymptotic_limits
from src.config import DEFAULT_TOLERANCES, Tolerances
from src.discretize import Boundary, Grid, coefficient_tensor, form_factors, line_grid
from src.errors import ArgumentError, DegeneracyError, UnsupportedError
from src.metric import MetricField, node_distances
from src.spectral import (
    ClusterRecord,
    SpectrumEstimate,
    clip_intervals,
    essential_spectrum_estimate,
    hausdorff_distance,
    median_spacing,
    merge_intervals,
)

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["source", "interval_lo", "interval_hi"]
SHIFT_COLUMNS = ["c", "translated_sup"]
C0_SPECTRUM_COLUMNS = ["L", "n", "hausdorff"]
INFINITY_COLUMNS = ["r", "nodes_outside", "interval_lo", "interval_hi"]

FLOQUET_PHASES = 33
FLOQUET_POINTS = 64


@dataclass
class AsymptoticFamily:
    base: CoefficientProfile
    limits: list[CoefficientProfile]
    directions: list[str]

    @property
    def has_degenerate(self) -> bool:
        return any(limit.degenerate for limit in self.limits)


def family_of(base: CoefficientProfile) -> AsymptoticFamily:
    pairs = asymptotic_limits(base)
    return AsymptoticFamily(base, [limit for _, limit in pairs], [direction for direction, _ in pairs])


def declared_family(
    base: CoefficientProfile, limits: list[CoefficientProfile] | None, directions: list[str] | None = None
) -> AsymptoticFamily:
    """Family from user-supplied limits.

    An empty or missing list falls back to the built-in limits of ``base``.
    For built-in bases the declared set must match the computed one.
    """
    if not limits:
        return family_of(base)
    directions = directions or ["declared"] * len(limits)
    if len(directions) != len(limits):
        raise ArgumentError("declared limits and directions differ in length")
    if base.kind != ProfileKind.TABULATED:
        expected = {limit for _, limit in asymptotic_limits(base)}
        if set(limits) != expected:
            raise ArgumentError(
                f"declared limits of {base.label} ({[p.label for p in limits]}) do not match "
                f"its asymptotic profiles ({sorted(p.label for p in expected)})"
            )
    return AsymptoticFamily(base, list(limits), list(directions))


# ---------------------------------------------------------------------------
# Spectra of limit operators
# ---------------------------------------------------------------------------


def _is_constant(profile: CoefficientProfile) -> bool:
    if profile.kind == ProfileKind.UNIFORM:
        return True
    return profile.kind == ProfileKind.MATRIX_DIAG_2D and profile.params[3] == 0.0


def floquet_bands(profile: CoefficientProfile, phases: int = FLOQUET_PHASES, points: int = FLOQUET_POINTS):
    """Band edges of a periodic 1D profile from Bloch-phase sweeps over one period.

    The cell operator is assembled on one period with the wrap-around edge
    carrying the phase e^{i theta}; band j spans the range of its j-th
    eigenvalue over theta in [0, pi].
    """
    if profile.kind != ProfileKind.PERIODIC:
        raise UnsupportedError(f"floquet_bands needs a periodic profile, not {profile.label}")
    period = profile.params[2]
    grid = line_grid(0.0, period, points, periodic=True)
    factors, quad_points = form_factors(grid, Boundary.PERIODIC)
    a = coefficient_tensor(profile, quad_points)[0][0]
    G = factors[0].grads[0].toarray().astype(complex)
    wrap = points - 1
    values = []
    for theta in np.linspace(0.0, math.pi, phases):
        Gt = G.copy()
        Gt[wrap, 0] *= np.exp(1j * theta)
        values.append(scipy.linalg.eigvalsh(Gt.conj().T @ (a[:, None] * Gt)))
    table = np.array(values)
    return [(float(table[:, j].min()), float(table[:, j].max())) for j in range(table.shape[1])]


def limit_spectrum(
    limit: CoefficientProfile,
    window: tuple[float, float],
    *,
    L_list=(20.0, 40.0, 80.0),
    points_per_unit: float = 8.0,
    allow_degenerate: bool = False,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> list[tuple[float, float]]:
    """Spectrum of one asymptotic operator, clipped to the window."""
    wlo, whi = window
    if limit.degenerate:
        if not allow_degenerate:
            raise DegeneracyError(f"limit {limit.label} is degenerate; pass allow_degenerate to use sigma = {{0}}")
        return [(0.0, 0.0)] if wlo <= 0.0 <= whi else []
    if _is_constant(limit):
        return [(max(0.0, wlo), whi)] if whi >= 0.0 else []
    if limit.kind == ProfileKind.PERIODIC:
        return clip_intervals(merge_intervals(floquet_bands(limit)), window)
    return essential_spectrum_estimate(limit, L_list, points_per_unit, window, tolerances=tolerances).intervals


def union_spectrum(
    family: AsymptoticFamily,
    window: tuple[float, float],
    *,
    L_list=(20.0, 40.0, 80.0),
    points_per_unit: float = 8.0,
    allow_degenerate: bool = False,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    mapper=map,
) -> SpectrumEstimate:
    """Closure of the union of the limit operators' spectra within the window."""
    unique: list[CoefficientProfile] = []
    for limit in family.limits:
        if limit not in unique:
            unique.append(limit)
    if not unique:
        logger.warning("%s has no asymptotic limits; the union is empty", family.base.label)
        return SpectrumEstimate([])

    def one(limit: CoefficientProfile) -> list[tuple[float, float]]:
        return limit_spectrum(
            limit,
            window,
            L_list=L_list,
            points_per_unit=points_per_unit,
            allow_degenerate=allow_degenerate,
            tolerances=tolerances,
        )

    pieces = list(mapper(one, unique))
    intervals = merge_intervals([iv for piece in pieces for iv in piece])
    evidence = [
        [
            ClusterRecord(math.inf, limit.label, lo, hi, 0)
            for limit, piece in zip(unique, pieces)
            for lo, hi in piece
            if hi >= ilo and lo <= ihi
        ]
        for ilo, ihi in intervals
    ]
    logger.info("Union over %d limit(s) of %s: %s", len(unique), family.base.label, intervals)
    return SpectrumEstimate(intervals, evidence)


# ---------------------------------------------------------------------------
# Essential spectrum against the union
# ---------------------------------------------------------------------------


@dataclass
class CompareConfig:
    window: tuple[float, float] = (0.0, 10.0)
    L_list: tuple[float, ...] = (20.0, 40.0, 80.0)
    points_per_unit: float = 8.0
    allow_degenerate: bool = True
    tol_h: float | None = None


@dataclass
class EssentialComparison:
    profile: str
    estimate: SpectrumEstimate
    union: SpectrumEstimate
    distance: float
    tol_h: float
    degenerate_limits: bool

    @property
    def agree(self) -> bool:
        return self.distance <= self.tol_h

    @property
    def verdict(self) -> str:
        return "agree" if self.agree else "disagree"

    def rows(self) -> list[list]:
        rows = [["estimate", lo, hi] for lo, hi in self.estimate.intervals]
        rows.extend(["union", lo, hi] for lo, hi in self.union.intervals)
        return rows


def compare_essential(
    base: CoefficientProfile,
    family: AsymptoticFamily,
    config: CompareConfig | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    *,
    mapper=map,
) -> EssentialComparison:
    """Hausdorff distance between the box estimate of sigma_ess(H) and the limit union.

    The default tolerance is ``hausdorff_factor`` times the median eigenvalue
    spacing on the finest box.
    """
    config = config or CompareConfig()
    if base.degenerate:
        raise DegeneracyError(f"{base.label} is degenerate")
    estimate = essential_spectrum_estimate(
        base,
        config.L_list,
        config.points_per_unit,
        config.window,
        tolerances=tolerances,
        ceiling=tolerances.coefficient_ceiling,
    )
    union = union_spectrum(
        family,
        config.window,
        L_list=config.L_list,
        points_per_unit=config.points_per_unit,
        allow_degenerate=config.allow_degenerate,
        tolerances=tolerances,
        mapper=mapper,
    )
    tol_h = config.tol_h if config.tol_h is not None else tolerances.hausdorff_factor * estimate.spacing
    distance = hausdorff_distance(estimate.intervals, union.intervals)
    report = EssentialComparison(base.label, estimate, union, distance, tol_h, family.has_degenerate)
    logger.info("%s: Hausdorff %.4g vs tol %.4g -> %s", base.label, distance, tol_h, report.verdict)
    return report


# ---------------------------------------------------------------------------
# C0 multipliers
# ---------------------------------------------------------------------------


def _rational(x):
    return 1.0 / (1.0 + x**2)


def _gaussian(x):
    return np.exp(-(x**2))


def _sech(x):
    return 1.0 / np.cosh(x)


def _zero(x):
    return np.zeros_like(x, dtype=float)


PHI_LIBRARY = {"rational": _rational, "gaussian": _gaussian, "sech": _sech, "zero": _zero, "sin": np.sin}


@dataclass
class C0Report:
    range_closure: tuple[float, float]
    shift_rows: list[list] = field(default_factory=list)
    spectrum_rows: list[list] = field(default_factory=list)

    @property
    def translates_vanish(self) -> bool:
        sups = [row[1] for row in self.shift_rows]
        return sups[-1] <= max(1e-12, 0.01 * sups[0])

    @property
    def spectrum_converges(self) -> bool:
        distances = [row[2] for row in self.spectrum_rows]
        return all(b <= a + 1e-12 for a, b in zip(distances, distances[1:]))


def c0_counterexample(
    phi,
    L_list=(10.0, 20.0, 40.0, 80.0),
    points_per_unit: float = 8.0,
    shifts=None,
) -> C0Report:
    """Translates of phi(Q) vanish while its spectrum fills the closure of the range.

    ``shifts`` defaults to 16 values of c on [0, 4 max(L)]; translated sups
    are measured on the smallest box.
    """
    phi = PHI_LIBRARY[phi] if isinstance(phi, str) else phi
    L_list = sorted(float(v) for v in L_list)
    if not L_list:
        raise ArgumentError("c0_counterexample needs at least one box size")
    big = 4 * L_list[-1]
    dense = phi(np.linspace(-big, big, 200_001))
    # phi tends to 0 at infinity, so 0 lies in the closure of its range
    range_closure = (float(min(dense.min(), 0.0)), float(max(dense.max(), 0.0)))

    window_nodes = line_grid(-L_list[0], L_list[0], max(8, math.ceil(2 * L_list[0] * points_per_unit))).nodes()
    shifts = np.linspace(0.0, big, 16) if shifts is None else np.asarray(shifts, dtype=float)
    report = C0Report(range_closure)
    for c in shifts:
        report.shift_rows.append([float(c), float(np.max(np.abs(phi(window_nodes + c))))])
    for L in L_list:
        n = max(8, math.ceil(2 * L * points_per_unit))
        values = phi(line_grid(-L, L, n).nodes())
        points = [(float(v), float(v)) for v in values]
        report.spectrum_rows.append([L, n, hausdorff_distance(points, [range_closure])])
    logger.info(
        "C0 multiplier: final translated sup %.3g, final Hausdorff %.3g",
        report.shift_rows[-1][1],
        report.spectrum_rows[-1][2],
    )
    return report


# ---------------------------------------------------------------------------
# Spectrum at infinity
# ---------------------------------------------------------------------------


def _center_distances(grid: Grid, center, metric: MetricField | None) -> np.ndarray:
    coords = grid.nodes().reshape(grid.size, grid.dim)
    point = np.zeros(grid.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    if metric is not None:
        index = int(np.argmin(np.sum((coords - point) ** 2, axis=1)))
        return node_distances(metric, index)
    return np.sqrt(np.sum((coords - point) ** 2, axis=1))


def _as_intervals(values: np.ndarray, factor: float) -> list[tuple[float, float]]:
    if values.size == 0:
        return []
    gap = factor * median_spacing(values)
    return merge_intervals([(float(v), float(v)) for v in values], gap=gap)


def spectrum_at_infinity(
    A: np.ndarray,
    grid: Grid,
    r_list,
    *,
    center=None,
    metric: MetricField | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> SpectrumEstimate:
    """r-stable part of the spectrum of A compressed to nodes with d(x, a) >= r.

    The estimate is the interval set at the largest radius; it is flagged
    inconclusive when it moved by more than ``stability_tol`` (relative to
    max(1, ||A||)) between the last two radii.
    """
    A = np.asarray(A)
    if not np.allclose(A, A.conj().T, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise UnsupportedError("spectrum_at_infinity handles self-adjoint matrices")
    r_list = sorted(float(v) for v in r_list)
    if len(r_list) < 2:
        raise ArgumentError(f"spectrum_at_infinity needs at least 2 radii, got {len(r_list)}")
    distances = _center_distances(grid, center, metric)
    scale = max(1.0, float(np.abs(scipy.linalg.eigvalsh(A)).max()))
    per_r = []
    records: list[ClusterRecord] = []
    for r in r_list:
        outside = np.flatnonzero(distances >= r)
        if outside.size == 0:
            raise ArgumentError(f"no grid nodes lie at distance >= {r} from the centre")
        values = scipy.linalg.eigvalsh(A[np.ix_(outside, outside)])
        intervals = _as_intervals(values, tolerances.cluster_factor)
        per_r.append(intervals)
        records.extend(ClusterRecord(r, "compressed", lo, hi, int(outside.size)) for lo, hi in intervals)
    drift = hausdorff_distance(per_r[-1], per_r[-2])
    unstable = drift > tolerances.stability_tol * scale
    if unstable:
        logger.warning("Spectrum at infinity moved by %.3g between r=%g and r=%g", drift, r_list[-2], r_list[-1])
    final = per_r[-1]
    evidence = [[rec for rec in records if rec.hi >= lo and rec.lo <= hi] for lo, hi in final]
    return SpectrumEstimate(final, evidence, [unstable] * len(final))
