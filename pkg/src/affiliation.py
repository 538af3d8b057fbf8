"""Finite-dimensional diagnostics for the algebras D and E.

Sweeps measure how far conjugation by position phases (V_k) and translation
(U_s) move an operator; the classifier reads uniformity over growing boxes
from those sweeps. The remaining operations cover the k-shifted form, the
frequency regularizer f_M, band decompositions over unit cubes, and
support arithmetic for bounded-support and finite-range operators.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.fft
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import kendalltau

from src.coefficients import CoefficientProfile
from src.config import DEFAULT_TOLERANCES, Tolerances
from src.discretize import Boundary, Grid, assemble, coefficient_tensor, form_factors, line_grid, translation_operator
from src.errors import ArgumentError, PreconditionError, RegularizerError, UnsupportedError
from src.metric import CubePartition, MetricField, block_norms, node_distances, pairwise_node_distances
from src.spectral import opnorm, resolvent, spectral_function

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["parameter", "norm", "L", "n", "profile"]
UNIFORMITY_COLUMNS = ["L", "n", "sqrt_resolvent_norm", "resolvent_norm"]
REGULARIZER_COLUMNS = ["M", "t", "step_norm", "partial_norm", "f_max"]

THRESHOLD_NOTE = "thresholds are implementation choices, not constants from the theory"


@dataclass
class SweepResult:
    """(parameter value, operator norm) samples with grid context."""

    parameter: str
    samples: list[tuple[float, float]]
    context: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.samples])

    @property
    def norms(self) -> np.ndarray:
        return np.array([n for _, n in self.samples])

    def rows(self) -> list[list]:
        L = self.context.get("L", "")
        n = self.context.get("n", "")
        tag = self.context.get("profile", "")
        return [[value, norm, L, n, tag] for value, norm in self.samples]


def _node_coordinates(grid: Grid) -> np.ndarray:
    return grid.nodes().reshape(grid.size, grid.dim)


def _wavevector(k, dim: int) -> np.ndarray:
    vec = np.atleast_1d(np.asarray(k, dtype=float))
    if vec.size == 1 and dim > 1:
        # scalar k acts along the first axis
        vec = np.concatenate([vec, np.zeros(dim - 1)])
    if vec.shape != (dim,):
        raise ArgumentError(f"wave vector {k} does not match grid dimension {dim}")
    return vec


# ---------------------------------------------------------------------------
# V_k and U_s sweeps
# ---------------------------------------------------------------------------


def conjugate_by_phase(A: np.ndarray, grid: Grid, k) -> np.ndarray:
    """V_k A V_{-k}: entries A_ij e^{i k (x_i - x_j)}."""
    phase = np.exp(1j * (_node_coordinates(grid) @ _wavevector(k, grid.dim)))
    return phase[:, None] * A * phase.conj()[None, :]


def vk_sweep(A: np.ndarray, grid: Grid, k_list, context: dict | None = None) -> SweepResult:
    """||V_k A V_{-k} - A|| for each k."""
    A = np.asarray(A)
    samples = []
    for k in k_list:
        norm = 0.0 if not np.any(_wavevector(k, grid.dim)) else opnorm(conjugate_by_phase(A, grid, k) - A)
        samples.append((float(np.linalg.norm(_wavevector(k, grid.dim))), norm))
    return SweepResult("k", samples, {"n": grid.size, **(context or {})})


def us_sweep(A: np.ndarray, grid: Grid, s_list, context: dict | None = None) -> SweepResult:
    """||U_s A - A|| for each s on a periodic grid."""
    if not grid.periodic:
        raise UnsupportedError("us_sweep needs a periodic grid")
    A = np.asarray(A)
    samples = []
    for s in s_list:
        shift = _wavevector(s, grid.dim)
        norm = 0.0 if not np.any(shift) else opnorm(translation_operator(grid, shift) @ A - A)
        samples.append((float(np.linalg.norm(shift)), norm))
    return SweepResult("s", samples, {"n": grid.size, **(context or {})})


# ---------------------------------------------------------------------------
# Uniformity over growing boxes
# ---------------------------------------------------------------------------


@dataclass
class UniformityStudy:
    profile: str
    s: float
    rows: list[list]
    monotone: bool
    kendall_tau: float
    sup: float
    relative_variation: float

    @property
    def norms(self) -> np.ndarray:
        return np.array([row[2] for row in self.rows])


def _box_points(L: float, points_per_unit: float) -> int:
    n = max(8, int(round(2 * L * points_per_unit)))
    return n + (n % 2)


def sqrt_resolvent(op) -> np.ndarray:
    """(H^{1/2} + I)^{-1}."""
    return spectral_function(op, lambda lam: 1.0 / (np.sqrt(np.maximum(lam, 0.0)) + 1.0))


def uniformity_study(
    profile: CoefficientProfile,
    s: float,
    L_list,
    points_per_unit: float = 8.0,
    *,
    ceiling: float | None = None,
    mapper=map,
) -> UniformityStudy:
    """||(U_s - I) R_L|| on periodic boxes (-L, L) with R_L = (H_L^{1/2} + I)^{-1}.

    The plain resolvent (H_L + I)^{-1} is measured alongside. ``mapper`` lets
    callers fan the box sizes out over a worker pool.
    """
    L_list = sorted(float(v) for v in L_list)
    if len(L_list) < 4:
        raise ArgumentError(f"uniformity_study needs at least 4 box sizes, got {len(L_list)}")

    def one(L: float) -> list:
        n = _box_points(L, points_per_unit)
        grid = line_grid(-L, L, n, periodic=True)
        op = assemble(profile, grid, Boundary.PERIODIC, ceiling=ceiling)
        if s == 0:
            return [L, n, 0.0, 0.0]
        U = translation_operator(grid, s)
        root = sqrt_resolvent(op)
        plain = spectral_function(op, lambda lam: 1.0 / (lam + 1.0))
        return [L, n, opnorm(U @ root - root), opnorm(U @ plain - plain)]

    rows = list(mapper(one, L_list))
    norms = np.array([row[2] for row in rows])
    monotone = bool(np.all(np.diff(norms) >= -1e-12))
    tau = float(kendalltau(L_list, norms).statistic) if np.ptp(norms) > 0 else 0.0
    sup = float(norms.max())
    variation = float(np.ptp(norms) / sup) if sup > 0 else 0.0
    logger.info("Uniformity %s s=%g: norms %s (tau %.2f)", profile.label, s, np.round(norms, 4).tolist(), tau)
    return UniformityStudy(profile.label, float(s), rows, monotone, tau, sup, variation)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


class Verdict(Enum):
    E_AFFILIATED = "E_affiliated"
    D_ONLY = "D_only"
    INCONCLUSIVE = "inconclusive"


@dataclass
class ClassifyConfig:
    L_list: tuple[float, ...] = (10.0, 20.0, 40.0, 80.0)
    k_list: tuple[float, ...] = (0.01, 0.02, 0.05, 0.1)
    s_list: tuple[float, ...] = (0.25, 0.5, 1.0)
    points_per_unit: float = 8.0
    alpha: float = 1.0


@dataclass
class AffiliationVerdict:
    verdict: Verdict
    evidence: dict

    def record_text(self) -> str:
        lines = [f"verdict: {self.verdict.value}"]
        for key in sorted(self.evidence):
            lines.append(f"{key}: {self.evidence[key]}")
        return "\n".join(lines) + "\n"


def classify(
    profile: CoefficientProfile,
    study: ClassifyConfig | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    *,
    mapper=map,
) -> AffiliationVerdict:
    """E_affiliated, D_only or inconclusive from V-sweeps and U-uniformity.

    V passes when max over L of ||V_k R V_{-k} - R|| <= envelope_v * k for
    every k. U is uniform when max over L of ||(U_s - I) R_L|| <= envelope_u * s
    for every s, and fails when it exceeds theta_fail for some s. Coefficients
    are clamped at ``coefficient_ceiling`` so profiles that blow up on one
    side stay representable.
    """
    study = study or ClassifyConfig()
    ceiling = tolerances.coefficient_ceiling

    def v_norms(L: float) -> list[float]:
        lo, hi = max(-L, profile.domain[0][0]), min(L, profile.domain[0][1])
        n = max(8, int(round((hi - lo) * study.points_per_unit)))
        grid = line_grid(lo, hi, n)
        R = resolvent(assemble(profile, grid, Boundary.DIRICHLET, ceiling=ceiling), study.alpha)
        return vk_sweep(R, grid, study.k_list).norms.tolist()

    v_table = np.array(list(mapper(v_norms, study.L_list)))
    v_max = v_table.max(axis=0)
    v_envelope = tolerances.envelope_v * np.asarray(study.k_list)
    v_pass = bool(np.all(v_max <= v_envelope))

    u_studies = [
        uniformity_study(profile, s, study.L_list, study.points_per_unit, ceiling=ceiling, mapper=mapper)
        for s in study.s_list
    ]
    u_max = np.array([u.sup for u in u_studies])
    u_envelope = tolerances.envelope_u * np.asarray(study.s_list)
    u_uniform = bool(np.all(u_max <= u_envelope))
    u_fails = bool(np.any(u_max > tolerances.theta_fail))

    if v_pass and u_uniform:
        verdict = Verdict.E_AFFILIATED
    elif v_pass and u_fails:
        verdict = Verdict.D_ONLY
    else:
        verdict = Verdict.INCONCLUSIVE
    evidence = {
        "profile": profile.label,
        "L_list": list(study.L_list),
        "k_list": list(study.k_list),
        "v_max_norms": [round(float(v), 8) for v in v_max],
        "v_envelope": f"{tolerances.envelope_v} * k",
        "v_pass": v_pass,
        "s_list": list(study.s_list),
        "u_max_norms": [round(float(v), 8) for v in u_max],
        "u_monotone": [u.monotone for u in u_studies],
        "u_envelope": f"{tolerances.envelope_u} * s",
        "theta_fail": tolerances.theta_fail,
        "u_uniform": u_uniform,
        "u_fails": u_fails,
        "coefficient_ceiling": ceiling,
        "note": THRESHOLD_NOTE,
    }
    logger.info("Classified %s as %s", profile.label, verdict.value)
    return AffiliationVerdict(verdict, evidence)


# ---------------------------------------------------------------------------
# k-shifted form
# ---------------------------------------------------------------------------


@dataclass
class FormSweep:
    sweep: SweepResult
    linear_norm: float
    quadratic_norm: float
    raw_linear_norm: float
    raw_quadratic_norm: float
    fit: tuple[float, float]
    fit_residual: float
    shape_residual: float


def _shift_parts(profile: CoefficientProfile, grid: Grid, boundary: Boundary, k) -> tuple:
    """L, B1 and B2 with L_k - L = B1 + B2, B1 linear and B2 quadratic in k."""
    factors, points = form_factors(grid, boundary)
    tensor = coefficient_tensor(profile, points)
    kvec = _wavevector(k, grid.dim)
    size = grid.size
    L = sp.csr_matrix((size, size))
    B1 = sp.csr_matrix((size, size), dtype=complex)
    B2 = sp.csr_matrix((size, size))
    for factor in factors:
        S = factor.values
        for r, gr in enumerate(factor.grads):
            for s, gs in enumerate(factor.grads):
                a = sp.diags(tensor[r][s])
                w = factor.weight
                L = L + w * (gr.T @ a @ gs)
                # (G + ikS)^H a (G + ikS) expanded by powers of k
                B1 = B1 + w * 1j * (kvec[s] * (gr.T @ a @ S) - kvec[r] * (S.T @ a @ gs))
                B2 = B2 + w * kvec[r] * kvec[s] * (S.T @ a @ S)
    return L.tocsr(), B1.tocsr(), B2.tocsr(), factors, tensor, kvec


def _shifted_form(factors, tensor, kvec, size: int) -> sp.csr_matrix:
    total = sp.csr_matrix((size, size), dtype=complex)
    for factor in factors:
        for r, gr in enumerate(factor.grads):
            for s, gs in enumerate(factor.grads):
                left = gr + 1j * kvec[r] * factor.values
                right = gs + 1j * kvec[s] * factor.values
                total = total + factor.weight * (left.conj().T @ sp.diags(tensor[r][s]) @ right)
    return total.tocsr()


def form_commutator_sweep(
    profile: CoefficientProfile,
    grid: Grid,
    k_list,
    boundary: Boundary = Boundary.DIRICHLET,
) -> FormSweep:
    """||(H+I)^{-1/2} (L_k - L) (H+I)^{-1/2}|| for each k.

    L_k is the form with momentum shifted by k. The sweep also records the
    unit-k norms of its linear and quadratic parts, a least-squares fit
    c1|k| + c2 k^2, and the operator-level check that L_k - L is exactly that
    quadratic polynomial in k.
    """
    if grid.periodic:
        boundary = Boundary.PERIODIC
    op = assemble(profile, grid, boundary)
    half = spectral_function(op, lambda lam: 1.0 / np.sqrt(lam + 1.0))
    unit = np.ones(grid.dim) / math.sqrt(grid.dim)
    _, B1, B2, factors, tensor, _ = _shift_parts(profile, grid, boundary, unit)
    sandwich_1 = half @ B1.toarray() @ half
    sandwich_2 = half @ B2.toarray() @ half

    samples, shape_residual = [], 0.0
    for k in k_list:
        kk = float(k)
        if kk == 0:
            samples.append((0.0, 0.0))
            continue
        norm = opnorm(kk * sandwich_1 + kk**2 * sandwich_2)
        samples.append((kk, norm))
        direct = _shifted_form(factors, tensor, kk * unit, grid.size) - op.matrix
        expected = kk * B1 + kk**2 * B2
        scale = max(abs(direct).max(), 1e-300)
        shape_residual = max(shape_residual, abs(direct - expected).max() / scale)

    ks = np.array([abs(v) for v, _ in samples])
    ns = np.array([n for _, n in samples])
    design = np.column_stack([ks, ks**2])
    coef, *_ = np.linalg.lstsq(design, ns, rcond=None)
    predicted = design @ coef
    nonzero = ns > 0
    fit_residual = float(np.max(np.abs(predicted[nonzero] - ns[nonzero]) / ns[nonzero])) if nonzero.any() else 0.0

    sweep = SweepResult("k", samples, {"n": grid.size, "profile": profile.label})
    return FormSweep(
        sweep=sweep,
        linear_norm=opnorm(sandwich_1),
        quadratic_norm=opnorm(sandwich_2),
        raw_linear_norm=opnorm(B1),
        raw_quadratic_norm=opnorm(B2),
        fit=(float(coef[0]), float(coef[1])),
        fit_residual=fit_residual,
        shape_residual=float(shape_residual),
    )


# ---------------------------------------------------------------------------
# Frequency regularizer
# ---------------------------------------------------------------------------


@dataclass
class Regularizer:
    frequencies: np.ndarray
    times: list[float]
    step_norms: list[float]
    partial_norms: list[float]
    profiles: np.ndarray  # row M-1 holds f_M on the frequency grid
    search: list[dict]

    @property
    def f(self) -> np.ndarray:
        return self.profiles[-1]

    def rows(self) -> list[list]:
        return [
            [m + 1, t, step, partial, float(self.profiles[m].max())]
            for m, (t, step, partial) in enumerate(zip(self.times, self.step_norms, self.partial_norms))
        ]

    def bounds_hold(self) -> dict[str, bool]:
        k2 = self.frequencies**2
        budget = len(self.times)
        return {
            "f_at_least_one": bool(np.all(self.profiles >= 1.0 - 1e-12)),
            "f_below_one_plus_k2": bool(np.all(self.f <= 1.0 + k2 * (1 + 1e-9) + 1e-12)),
            "f_M_at_most_M_plus_one": bool(
                all(np.all(self.profiles[m] <= m + 2 + 1e-12) for m in range(budget))
            ),
            "f_M_monotone_in_M": bool(np.all(np.diff(self.profiles, axis=0) >= -1e-12)),
            "partial_norms_below_two": bool(all(v < 2.0 for v in self.partial_norms)),
        }


def _multiplier_norm(weights: np.ndarray, A_hat: np.ndarray) -> float:
    """||diag(weights) A_hat|| via the largest eigenvalue of A_hat^H W^2 A_hat."""
    scaled = weights[:, None] * A_hat
    if scaled.shape[0] <= 512:
        return opnorm(scaled)
    gram = scaled.conj().T @ scaled
    top = spla.eigsh(gram, k=1, which="LA", return_eigenvectors=False)
    return float(math.sqrt(max(top[0].real, 0.0)))


def build_regularizer(A: np.ndarray, grid: Grid, budget: int) -> Regularizer:
    """Greedy times t_n <= 2^-n with ||(I - h_{t_n}(P)) A|| <= 2^-n, h_t(k) = e^{-k^2 t}.

    Each step tries t = 2^-n and otherwise bisects log t on [max(1e-8, 2^-n h^2), 2^-n].
    Below that floor the multiplier no longer damps the Nyquist frequency, so
    ``RegularizerError`` (carrying the search record) means Ran(A) reaches the
    grid cutoff.
    """
    if not grid.periodic or grid.dim != 1:
        raise UnsupportedError("build_regularizer needs a 1D periodic grid")
    if budget < 1:
        raise ArgumentError(f"budget must be positive, got {budget}")
    k = grid.frequencies(0)
    A_hat = scipy.fft.fft(np.asarray(A), axis=0, norm="ortho")

    def phi(t: float) -> float:
        return _multiplier_norm(1.0 - np.exp(-(k**2) * t), A_hat)

    times, steps, search = [], [], []
    for n in range(1, budget + 1):
        target = 2.0**-n
        t_hi = target
        record = {"n": n, "target": target, "tried": []}
        value = phi(t_hi)
        record["tried"].append((t_hi, value))
        if value > target:
            t_lo = max(1e-8, target * grid.spacing[0] ** 2)
            low_value = phi(t_lo)
            record["tried"].append((t_lo, low_value))
            if low_value > target:
                search.append(record)
                logger.warning("No admissible time for step %d: phi(%.3g) = %.4g > %.4g", n, t_lo, low_value, target)
                raise RegularizerError(
                    f"no t in [{t_lo:.3g}, {t_hi:.3g}] gives ||(I - h_t(P))A|| <= {target:.3g} at step {n}; "
                    "Ran(A) is not contained in Dom(f(P)) at this resolution",
                    evidence={"steps": search, "times": times},
                )
            for _ in range(60):
                if t_hi / t_lo < 1.0 + 1e-6:
                    break
                mid = math.sqrt(t_lo * t_hi)
                mid_value = phi(mid)
                record["tried"].append((mid, mid_value))
                if mid_value <= target:
                    t_lo = mid
                else:
                    t_hi = mid
            t_hi, value = t_lo, phi(t_lo)
        times.append(t_hi)
        steps.append(value)
        search.append(record)

    profiles = np.ones((budget, len(k)))
    partial_norms = []
    running = np.ones_like(k)
    for m, t in enumerate(times):
        running = running + (1.0 - np.exp(-(k**2) * t))
        profiles[m] = running
        partial_norms.append(_multiplier_norm(running, A_hat))
    logger.info("Regularizer built with %d steps; final ||f_M(P)A|| = %.4f", budget, partial_norms[-1])
    return Regularizer(k, times, steps, partial_norms, profiles, search)


# ---------------------------------------------------------------------------
# Band decomposition
# ---------------------------------------------------------------------------


@dataclass
class BandDecomposition:
    partition: CubePartition
    bands: dict[tuple[int, ...], np.ndarray]
    band_norms: dict[tuple[int, ...], float]
    block_norms: dict[tuple[int, ...], float]

    def reconstruct(self) -> np.ndarray:
        return sum(self.bands.values())

    def reconstruction_error(self, A: np.ndarray) -> float:
        scale = opnorm(A)
        return opnorm(self.reconstruct() - A) / scale if scale else opnorm(self.reconstruct())

    def per_band_bound_holds(self, rtol: float = 1e-10) -> bool:
        return all(self.band_norms[r] <= self.block_norms[r] * (1 + rtol) + 1e-14 for r in self.bands)


def band_decompose(A: np.ndarray, partition: CubePartition) -> BandDecomposition:
    """B_r = sum over n - m = r of P_m A P_n with band norms and mu(r)."""
    A = np.asarray(A)
    labels = np.empty(A.shape[0], dtype=int)
    for i, block in enumerate(partition.blocks):
        labels[block] = i
    centers = np.array(partition.centers)
    # r for every entry (i, j) is centre(j) - centre(i)
    offsets = centers[labels][None, :, :] - centers[labels][:, None, :]
    bands: dict[tuple[int, ...], np.ndarray] = {}
    for r in {tuple(int(v) for v in row) for row in offsets.reshape(-1, centers.shape[1])}:
        mask = np.all(offsets == np.array(r), axis=2)
        bands[r] = np.where(mask, A, 0.0)
    band_norm_map = {r: opnorm(B) for r, B in bands.items()}
    return BandDecomposition(partition, bands, band_norm_map, block_norms(A, partition))


# ---------------------------------------------------------------------------
# Bounded support and finite range
# ---------------------------------------------------------------------------


def ball_nodes(metric: MetricField, center_index: int, radius: float) -> np.ndarray:
    """Nodes x with d(x, a) < radius."""
    dist = node_distances(metric, center_index)
    return np.flatnonzero(dist < radius)


def support_radius(A: np.ndarray, distance_to_center: np.ndarray, tol: float = 0.0) -> float:
    """Smallest r with A = P_r A P_r up to entries of size ``tol``."""
    mask = np.abs(A) > tol
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    used = np.union1d(rows, cols)
    return float(distance_to_center[used].max()) if used.size else 0.0


def range_width(B: np.ndarray, distances: np.ndarray, tol: float = 0.0) -> float:
    """Largest d(x, y) over entries B_xy above ``tol``."""
    mask = np.abs(B) > tol
    return float(distances[mask].max()) if mask.any() else 0.0


@dataclass
class IdealAudit:
    r: float
    s: float
    support_AB: float
    support_BA: float
    distance_to_identity: float

    @property
    def passed(self) -> bool:
        limit = self.r + self.s + 1e-9
        return self.support_AB <= limit and self.support_BA <= limit and self.distance_to_identity >= 1.0 - 1e-9


def ideal_ops(
    A: np.ndarray,
    r: float,
    B: np.ndarray,
    s: float,
    metric: MetricField,
    center_index: int,
    tol: float = 0.0,
) -> IdealAudit:
    """Check supp(AB), supp(BA) <= r + s for A = P_r A P_r and B of range s.

    P_r projects onto nodes with d(x, a) < r around the marked centre a.
    ``tol`` is the magnitude below which entries count as zero.
    """
    d_center = node_distances(metric, center_index)
    outside = d_center >= r
    A_abs = np.abs(A)
    if np.any(A_abs[outside, :] > tol) or np.any(A_abs[:, outside] > tol):
        rows, cols = np.nonzero((A_abs > tol) & (outside[:, None] | outside[None, :]))
        raise PreconditionError(
            f"A is not supported in the ball of radius {r}",
            witness={"row": int(rows[0]), "col": int(cols[0]), "value": float(A[rows[0], cols[0]])},
        )
    distances = pairwise_node_distances(metric)
    too_far = (np.abs(B) > tol) & (distances > s)
    if np.any(too_far):
        rows, cols = np.nonzero(too_far)
        raise PreconditionError(
            f"B has entries beyond range {s}",
            witness={"row": int(rows[0]), "col": int(cols[0]), "distance": float(distances[rows[0], cols[0]])},
        )
    AB, BA = A @ B, B @ A
    # entries of AB and BA can cancel, so the bound is checked on structural support
    AB_pattern = (A_abs > tol).astype(float) @ (np.abs(B) > tol).astype(float)
    BA_pattern = (np.abs(B) > tol).astype(float) @ (A_abs > tol).astype(float)
    audit = IdealAudit(
        r=r,
        s=s,
        support_AB=max(support_radius(AB, d_center, tol), support_radius(AB_pattern, d_center, 0.0)),
        support_BA=max(support_radius(BA, d_center, tol), support_radius(BA_pattern, d_center, 0.0)),
        distance_to_identity=opnorm(A - np.eye(A.shape[0])),
    )
    if not audit.passed:
        logger.warning(
            "Ideal audit failed: supp(AB)=%.4g supp(BA)=%.4g bound %.4g", audit.support_AB, audit.support_BA, r + s
        )
    return audit


def random_bounded_support(metric: MetricField, center_index: int, r: float, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with A = P_r A P_r."""
    inside = node_distances(metric, center_index) < r
    size = len(inside)
    A = np.zeros((size, size))
    idx = np.flatnonzero(inside)
    A[np.ix_(idx, idx)] = rng.standard_normal((idx.size, idx.size))
    return A


def random_finite_range(metric: MetricField, s: float, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with B_xy = 0 whenever d(x, y) > s."""
    distances = pairwise_node_distances(metric)
    B = rng.standard_normal(distances.shape)
    B[distances > s] = 0.0
    return B


# ---------------------------------------------------------------------------
# Translation covariance
# ---------------------------------------------------------------------------


def shade_identity_check(S: np.ndarray, grid: Grid, k, x, s) -> dict[str, float]:
    """Compare sweep norms of S and of its translate S_x = U_x S U_{-x}.

    For grid-compatible k = 2*pi*m/L and integer-cell x both pairs agree to
    machine precision on a periodic grid.
    """
    if not grid.periodic:
        raise UnsupportedError("shade_identity_check needs a periodic grid")
    U = translation_operator(grid, x)
    S_x = U @ S @ U.conj().T
    v_plain = opnorm(conjugate_by_phase(S, grid, k) - S)
    v_shift = opnorm(conjugate_by_phase(S_x, grid, k) - S_x)
    Us = translation_operator(grid, s)
    u_plain = opnorm(Us @ S - S)
    u_shift = opnorm(Us @ S_x - S_x)
    return {"v_plain": v_plain, "v_shifted": v_shift, "u_plain": u_plain, "u_shifted": u_shift}
