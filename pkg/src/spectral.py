"""Eigendecompositions, resolvents, heat semigroups and spectrum estimates."""

import logging
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.coefficients import CoefficientProfile
from src.config import DEFAULT_TOLERANCES, DENSE_LIMIT, Tolerances
from src.discretize import Boundary, DiscreteOperator, assemble, line_grid
from src.errors import ArgumentError, SolverError, UnsupportedError

logger = logging.getLogger(__name__)

SVD_LIMIT = 2048
POWER_MAX_ITER = 5000

SPECTRAL_DATA_COLUMNS = ["kind", "index", "value", "residual"]
SPECTRUM_ESTIMATE_COLUMNS = ["interval_lo", "interval_hi", "evidence_count"]


@dataclass
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    residuals: np.ndarray
    solver: str = ""

    def rows(self) -> list[list]:
        return [["eigenvalue", i, float(v), float(r)] for i, (v, r) in enumerate(zip(self.eigenvalues, self.residuals))]


@dataclass(frozen=True)
class ClusterRecord:
    L: float
    boundary: str
    lo: float
    hi: float
    count: int


@dataclass
class SpectrumEstimate:
    """Closed intervals (disjoint, sorted) with per-interval evidence."""

    intervals: list[tuple[float, float]]
    evidence: list[list[ClusterRecord]] = field(default_factory=list)
    inconclusive: list[bool] = field(default_factory=list)
    spacing: float = 0.0

    def __post_init__(self):
        if not self.evidence:
            self.evidence = [[] for _ in self.intervals]
        if not self.inconclusive:
            self.inconclusive = [False for _ in self.intervals]

    @property
    def conclusive(self) -> bool:
        return not any(self.inconclusive)

    def rows(self) -> list[list]:
        return [[lo, hi, len(ev)] for (lo, hi), ev in zip(self.intervals, self.evidence)]


# ---------------------------------------------------------------------------
# Full decompositions (shared, read-only after build)
# ---------------------------------------------------------------------------

_FULL_CACHE: OrderedDict[str, tuple[np.ndarray, np.ndarray]] = OrderedDict()
_FULL_CACHE_SIZE = 8
_full_lock = threading.Lock()


def full_decomposition(op: DiscreteOperator) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of a symmetric operator, memoized by operator digest."""
    key = op.digest()
    with _full_lock:
        if key in _FULL_CACHE:
            _FULL_CACHE.move_to_end(key)
            return _FULL_CACHE[key]
    values, vectors = scipy.linalg.eigh(op.dense())
    with _full_lock:
        _FULL_CACHE[key] = (values, vectors)
        while len(_FULL_CACHE) > _FULL_CACHE_SIZE:
            _FULL_CACHE.popitem(last=False)
    return values, vectors


def spectral_function(op: DiscreteOperator, fn) -> np.ndarray:
    """fn(H) = V diag(fn(lambda)) V^T from the full decomposition."""
    values, vectors = full_decomposition(op)
    return (vectors * fn(values)) @ vectors.T


# ---------------------------------------------------------------------------
# Eigensolver
# ---------------------------------------------------------------------------


def _is_tridiagonal(op: DiscreteOperator) -> bool:
    if op.grid.dim != 1 or op.boundary == Boundary.PERIODIC or np.iscomplexobj(op.matrix.data):
        return False
    coo = op.matrix.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def _residuals(matrix, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.linalg.norm(matrix @ vectors - vectors * values, axis=0)


def eigensolve(op: DiscreteOperator, count: int, *, cache=None, tolerances: Tolerances = DEFAULT_TOLERANCES):
    """Lowest ``count`` eigenpairs.

    1D non-periodic operators go through the symmetric tridiagonal solver,
    anything up to the dense limit through LAPACK, and larger operators
    through shift-invert Lanczos.
    """
    n = op.dimension
    if not 1 <= count <= n:
        raise ArgumentError(f"count must lie in [1, {n}], got {count}")

    key = cache.key(op.digest(), count) if cache is not None else None
    if cache is not None:
        hit = cache.load(key)
        if hit is not None:
            values, vectors = hit
            return SpectralData(values, vectors, _residuals(op.matrix, values, vectors), solver="cache")

    if _is_tridiagonal(op):
        solver = "tridiagonal"
        d = op.matrix.diagonal()
        e = op.matrix.diagonal(1)
        values, vectors = scipy.linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, count - 1))
    elif n <= DENSE_LIMIT:
        solver = "dense"
        values, vectors = scipy.linalg.eigh(op.dense(), subset_by_index=[0, count - 1])
    else:
        solver = "shift-invert"
        abs_rows = np.asarray(abs(op.matrix).sum(axis=1)).ravel()
        diag = op.matrix.diagonal().real
        # Gershgorin lower bound keeps the shift below the whole spectrum
        sigma = float(np.min(diag - (abs_rows - np.abs(diag)))) - 1e-3 * (1.0 + float(np.max(abs_rows)))
        maxiter = 20 * n
        try:
            values, vectors = spla.eigsh(op.matrix.tocsc(), k=count, sigma=sigma, which="LM", maxiter=maxiter)
        except spla.ArpackNoConvergence as e:
            raise SolverError(
                f"Lanczos did not converge for {op.profile_tag}: {len(e.eigenvalues)}/{count} pairs",
                iterations=maxiter,
                converged=len(e.eigenvalues),
            ) from e
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]

    residuals = _residuals(op.matrix, values, vectors)
    limit = tolerances.residual_tol * (1.0 + np.abs(values))
    if np.any(residuals > limit):
        worst = int(np.argmax(residuals / limit))
        logger.warning(
            "Eigenpair %d of %s has residual %.3g above tolerance %.3g",
            worst,
            op.profile_tag,
            residuals[worst],
            limit[worst],
        )
    logger.info("Solved %d eigenpairs of %s (n=%d, %s)", count, op.profile_tag, n, solver)
    if cache is not None:
        cache.store(key, values, vectors)
    return SpectralData(values, vectors, residuals, solver=solver)


def eigenvalues_in(op: DiscreteOperator, lo: float, hi: float) -> np.ndarray:
    """All eigenvalues in (lo, hi] of a real symmetric operator."""
    if _is_tridiagonal(op):
        d = op.matrix.diagonal()
        e = op.matrix.diagonal(1)
        return scipy.linalg.eigh_tridiagonal(d, e, eigvals_only=True, select="v", select_range=(lo, hi))
    return scipy.linalg.eigh(op.dense(), eigvals_only=True, subset_by_value=(lo, hi))


# ---------------------------------------------------------------------------
# Functional calculus
# ---------------------------------------------------------------------------


def resolvent(op: DiscreteOperator, alpha: float) -> np.ndarray:
    """(H + alpha I)^{-1} as a dense symmetric matrix."""
    if alpha <= 0:
        raise ArgumentError(f"resolvent needs alpha > 0, got {alpha}")
    shifted = op.dense() + alpha * np.eye(op.dimension)
    result = scipy.linalg.solve(shifted, np.eye(op.dimension), assume_a="pos")
    return 0.5 * (result + result.T)


def heat(op: DiscreteOperator, t: float) -> np.ndarray:
    """e^{-tH} via the full eigendecomposition."""
    if t <= 0:
        raise ArgumentError(f"heat needs t > 0, got {t}")
    result = spectral_function(op, lambda lam: np.exp(-t * lam))
    return 0.5 * (result + result.T)


# ---------------------------------------------------------------------------
# Operator norms
# ---------------------------------------------------------------------------


def _power_norm(m, rtol: float, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[1])
    if np.iscomplexobj(m):
        v = v + 1j * rng.standard_normal(m.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(POWER_MAX_ITER):
        w = m.conj().T @ (m @ v)
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            return 0.0
        v = w / norm_w
        new = math.sqrt(norm_w)
        if abs(new - estimate) <= rtol * new:
            return new
        estimate = new
    logger.warning("Power iteration stopped at %d iterations (estimate %.6g)", POWER_MAX_ITER, estimate)
    return estimate


def opnorm(m, method: str = "auto", rtol: float = DEFAULT_TOLERANCES.opnorm_rtol) -> float:
    """Largest singular value.

    ``auto`` uses a dense SVD up to ``SVD_LIMIT`` rows and Lanczos (``svds``)
    beyond. ``power`` runs power iteration on M^H M and stops once successive
    estimates agree to ``rtol``. Its error then scales with the inverse of the
    gap between the top two singular values, which is small for assembled
    Laplacians, so ``auto`` never selects it.
    """
    if isinstance(m, DiscreteOperator):
        m = m.matrix
    if min(m.shape) == 0:
        return 0.0
    if method == "auto":
        method = "svd" if max(m.shape) <= SVD_LIMIT else "lanczos"
    if method == "svd":
        dense = m.toarray() if sp.issparse(m) else np.asarray(m)
        return float(scipy.linalg.svdvals(dense)[0])
    if method == "lanczos":
        operand = sp.csr_matrix(m) if sp.issparse(m) else np.asarray(m)
        s = spla.svds(operand, k=1, tol=rtol, return_singular_vectors=False)
        return float(s[0])
    if method == "power":
        return _power_norm(m, rtol)
    raise ArgumentError(f"Unknown opnorm method '{method}'")


# ---------------------------------------------------------------------------
# Interval arithmetic
# ---------------------------------------------------------------------------


def merge_intervals(intervals, gap: float = 0.0) -> list[tuple[float, float]]:
    """Union of closed intervals, joining pieces separated by at most ``gap``."""
    pieces = sorted((float(lo), float(hi)) for lo, hi in intervals)
    merged: list[tuple[float, float]] = []
    for lo, hi in pieces:
        if merged and lo <= merged[-1][1] + gap:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def intersect_intervals(a, b, slack: float = 0.0) -> list[tuple[float, float]]:
    out = []
    for alo, ahi in a:
        for blo, bhi in b:
            lo, hi = max(alo, blo), min(ahi, bhi)
            if lo <= hi + slack:
                out.append((min(lo, hi), max(lo, hi)))
    return merge_intervals(out)


def clip_intervals(intervals, window) -> list[tuple[float, float]]:
    wlo, whi = window
    return [(max(lo, wlo), min(hi, whi)) for lo, hi in intervals if hi >= wlo and lo <= whi]


def _one_sided(a, b) -> float:
    """sup over a in A of dist(a, B) for finite unions of closed intervals."""
    candidates = [v for iv in a for v in iv]
    for (_, left_hi), (right_lo, _) in zip(b, b[1:]):
        mid = 0.5 * (left_hi + right_lo)
        if any(lo <= mid <= hi for lo, hi in a):
            candidates.append(mid)
    worst = 0.0
    for x in candidates:
        d = min(0.0 if lo <= x <= hi else min(abs(x - lo), abs(x - hi)) for lo, hi in b)
        worst = max(worst, d)
    return worst


def hausdorff_distance(a, b) -> float:
    a, b = merge_intervals(a), merge_intervals(b)
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf
    return max(_one_sided(a, b), _one_sided(b, a))


def spectral_gaps(intervals, window) -> list[tuple[float, float]]:
    """Open gaps of a union of intervals inside the window."""
    wlo, whi = window
    gaps = []
    cursor = wlo
    for lo, hi in merge_intervals(clip_intervals(intervals, window)):
        if lo > cursor:
            gaps.append((cursor, lo))
        cursor = max(cursor, hi)
    if cursor < whi:
        gaps.append((cursor, whi))
    return gaps


# ---------------------------------------------------------------------------
# Essential spectrum estimator
# ---------------------------------------------------------------------------

MIN_CLUSTER = 3
_NEIGHBOURS = 5


def median_spacing(values: np.ndarray) -> float:
    gaps = np.diff(np.sort(values))
    return float(np.median(gaps)) if len(gaps) else 0.0


def cluster_eigenvalues(values: np.ndarray, factor: float) -> list[tuple[float, float, int]]:
    """Split sorted eigenvalues at gaps exceeding ``factor`` times the local median spacing."""
    values = np.sort(values)
    if len(values) < MIN_CLUSTER:
        return []
    gaps = np.diff(values)
    clusters = []
    start = 0
    for i, gap in enumerate(gaps):
        window = gaps[max(0, i - _NEIGHBOURS) : i + _NEIGHBOURS + 1]
        local = float(np.median(window))
        if gap > factor * local:
            clusters.append((start, i))
            start = i + 1
    clusters.append((start, len(values) - 1))
    return [(float(values[a]), float(values[b]), b - a + 1) for a, b in clusters if b - a + 1 >= MIN_CLUSTER]


def _box(profile: CoefficientProfile, L: float) -> tuple[float, float]:
    dlo, dhi = profile.domain[0]
    return max(-L, dlo), min(L, dhi)


def essential_spectrum_estimate(
    profile: CoefficientProfile,
    L_list,
    points_per_unit: float,
    window: tuple[float, float],
    *,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    ceiling: float | None = None,
) -> SpectrumEstimate:
    """Eigenvalue clusters that survive growing boxes and both boundary conditions.

    For each half-width L the operator is assembled on (-L, L) (intersected
    with the profile's domain) with Dirichlet and Neumann boundaries. Clusters
    present for both are kept; an interval is inconclusive when it moved by
    more than the clustering tolerance between the last two box sizes.
    """
    L_list = sorted(float(v) for v in L_list)
    if len(L_list) < 3:
        raise ArgumentError(f"essential_spectrum_estimate needs at least 3 box sizes, got {len(L_list)}")
    if profile.dim != 1 or profile.is_matrix:
        raise UnsupportedError("essential_spectrum_estimate handles scalar 1D profiles")
    wlo, whi = window
    margin = 0.1 * (whi - wlo)
    factor = tolerances.cluster_factor

    per_L: list[list[tuple[float, float]]] = []
    tolerance_at: list[float] = []
    all_records: list[ClusterRecord] = []
    spacing = 0.0
    for L in L_list:
        lo, hi = _box(profile, L)
        n = max(8, math.ceil((hi - lo) * points_per_unit))
        grid = line_grid(lo, hi, n)
        unions = []
        for boundary in (Boundary.DIRICHLET, Boundary.NEUMANN):
            op = assemble(profile, grid, boundary, ceiling=ceiling)
            values = eigenvalues_in(op, wlo - margin, whi + margin)
            clusters = cluster_eigenvalues(values, factor)
            all_records.extend(ClusterRecord(L, boundary.value, c_lo, c_hi, c_n) for c_lo, c_hi, c_n in clusters)
            unions.append(merge_intervals([(c_lo, c_hi) for c_lo, c_hi, _ in clusters]))
            if boundary == Boundary.DIRICHLET:
                spacing = median_spacing(values)
        tol_L = factor * spacing
        tolerance_at.append(tol_L)
        per_L.append(clip_intervals(intersect_intervals(unions[0], unions[1], slack=tol_L), window))
        logger.info("L=%g n=%d: %d interval(s), tol %.3g", L, n, len(per_L[-1]), tol_L)

    final, previous = per_L[-1], per_L[-2]
    drift_tol = tolerance_at[-2]
    evidence, inconclusive = [], []
    for lo, hi in final:
        overlapping = [iv for iv in previous if iv[1] >= lo - drift_tol and iv[0] <= hi + drift_tol]
        if overlapping:
            drift = max(abs(lo - min(iv[0] for iv in overlapping)), abs(hi - max(iv[1] for iv in overlapping)))
        else:
            drift = math.inf
        inconclusive.append(drift > drift_tol)
        if drift > drift_tol:
            logger.warning("Interval [%.4g, %.4g] drifted by %.3g (> %.3g) between box sizes", lo, hi, drift, drift_tol)
        evidence.append([r for r in all_records if r.hi >= lo and r.lo <= hi])
    return SpectrumEstimate(final, evidence, inconclusive, spacing=spacing)
