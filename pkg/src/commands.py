"""Centralized command registry.

Maps each CLI command to the config sections it reads, its parameters with
defaults, and the pipeline that runs it. Drives config validation, the CLI
dispatcher and scripts/validate_config.py.

Pipelines never write files: they return an ``Outcome`` holding tables,
text records and plot callbacks, and the CLI (the single writer of the output
directory) persists them.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from src.affiliation import (
    REGULARIZER_COLUMNS,
    SWEEP_COLUMNS,
    UNIFORMITY_COLUMNS,
    ClassifyConfig,
    build_regularizer,
    classify,
    uniformity_study,
    us_sweep,
    vk_sweep,
)
from src.asymptotic import (
    C0_SPECTRUM_COLUMNS,
    COMPARISON_COLUMNS,
    INFINITY_COLUMNS,
    PHI_LIBRARY,
    SHIFT_COLUMNS,
    CompareConfig,
    c0_counterexample,
    compare_essential,
    family_of,
    spectrum_at_infinity,
)
from src.cache import EigenCache
from src.coefficients import ellipticity_bounds
from src.discretize import Boundary, assemble, grid_from_spec, line_grid
from src.errors import RegularizerError, UnsupportedError
from src.export import plot_intervals, plot_series, write_triplets
from src.graphmanifold import (
    DOUBLING_COLUMNS,
    HOLDER_SCAN_COLUMNS,
    KERNEL_AUDIT_COLUMNS,
    POINCARE_COLUMNS,
    TRUNCATION_COLUMNS,
    build_graph,
    doubling_constant,
    gaussian_audit,
    holder_audit,
    poincare_constant,
    truncation_error,
)
from src.liouville import (
    EQUIVALENCE_COLUMNS,
    TRANSFORM_COLUMNS,
    PotentialMethod,
    compare_green_functions,
    transform,
    transform_table,
    verify_equivalence,
)
from src.metric import (
    BLOCK_DECAY_COLUMNS,
    HEAT_AUDIT_COLUMNS,
    block_heat_decay,
    closed_metric,
    cube_partition,
    random_disjoint_pairs,
    verify_heat_bound,
)
from src.spectral import (
    SPECTRAL_DATA_COLUMNS,
    SPECTRUM_ESTIMATE_COLUMNS,
    eigensolve,
    essential_spectrum_estimate,
    resolvent,
)

if TYPE_CHECKING:
    from src.run_config import RunConfig

logger = logging.getLogger(__name__)

OPERATOR_COLUMNS = ["profile", "dimension", "nonzeros", "symmetry_defect", "digest", "boundary"]
CLUSTER_COLUMNS = ["interval", "L", "boundary", "lo", "hi", "count"]
ISOMETRY_COLUMNS = ["sample", "error"]
GREEN_COLUMNS = ["max_excess", "scale", "potential_nonnegative", "bounded"]
HOLDER_COLUMNS = ["t", "calibration_t", "constant", "alpha", "max_ratio", "violations", "pairs"]

# Log-linear truncation fits below this R^2 are not Gaussian decay
TRUNCATION_MIN_R2 = 0.95


# ---------------------------------------------------------------------------
# Registry types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    """One entry of a command's ``parameters`` section.

    kind is one of: int, float, bool, str, ints, floats, strs, optional_float.
    """

    name: str
    kind: str
    default: object
    choices: tuple = ()


@dataclass(frozen=True)
class Command:
    """A workbench command and the config sections it consumes."""

    name: str
    description: str
    profile: str  # "required" or "none"
    grid: str  # "required", "optional", "graph" or "none"
    params: tuple[Param, ...]
    runner: Callable[[RunContext], Outcome] | None = None

    def defaults(self) -> dict:
        return {p.name: list(p.default) if isinstance(p.default, tuple) else p.default for p in self.params}

    def param(self, name: str) -> Param | None:
        return next((p for p in self.params if p.name == name), None)


@dataclass
class RunContext:
    config: RunConfig
    cache: EigenCache | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    mapper: Callable = map


@dataclass
class Outcome:
    """Everything a pipeline produced, keyed by output file name."""

    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    texts: dict[str, str] = field(default_factory=dict)
    files: dict[str, Callable[[Path], Path]] = field(default_factory=dict)
    plots: dict[str, Callable[[Path], Path]] = field(default_factory=dict)
    verdicts: dict[str, object] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def check(self, name: str, ok: bool, detail: str = "") -> None:
        self.checks[name] = bool(ok)
        if not ok:
            self.failures.append(f"{name}: {detail}" if detail else name)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _format_row(columns: list[str], row: list) -> str:
    return ", ".join(f"{c}={v}" for c, v in zip(columns, row))


def _grid(ctx: RunContext):
    return grid_from_spec(ctx.config.grid_spec)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def run_assemble(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    grid, boundary = _grid(ctx)
    op = assemble(cfg.profile, grid, boundary, ceiling=p["ceiling"])
    defect = op.symmetry_defect()
    out.tables["operator.csv"] = (
        OPERATOR_COLUMNS,
        [[op.profile_tag, op.dimension, op.matrix.nnz, defect, op.digest(), boundary.value]],
    )
    out.check("symmetric", defect <= cfg.tolerances.symmetry_tol, f"symmetry defect {defect:.3g}")
    if p["triplets"]:
        out.files["operator.txt"] = lambda path: write_triplets(path, op)
    if p["eigenpairs"] > 0:
        data = eigensolve(op, p["eigenpairs"], cache=ctx.cache, tolerances=cfg.tolerances)
        out.tables["eigenvalues.csv"] = (SPECTRAL_DATA_COLUMNS, data.rows())
        out.verdicts["solver"] = data.solver
    return out


def run_spectrum(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    estimate = essential_spectrum_estimate(
        cfg.profile,
        p["L_list"],
        p["points_per_unit"],
        tuple(p["window"]),
        tolerances=cfg.tolerances,
        ceiling=p["ceiling"],
    )
    out.tables["spectrum.csv"] = (SPECTRUM_ESTIMATE_COLUMNS, estimate.rows())
    clusters = []
    for i, records in enumerate(estimate.evidence):
        clusters.extend([i, rec.L, rec.boundary, rec.lo, rec.hi, rec.count] for rec in records)
    out.tables["clusters.csv"] = (CLUSTER_COLUMNS, clusters)
    out.verdicts["intervals"] = "; ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in estimate.intervals) or "empty"
    unstable = [iv for iv, flag in zip(estimate.intervals, estimate.inconclusive) if flag]
    out.check("conclusive", estimate.conclusive, f"intervals moved between the largest boxes: {unstable}")
    if cfg.grid_spec is not None and p["eigenpairs"] > 0:
        grid, boundary = _grid(ctx)
        op = assemble(cfg.profile, grid, boundary, ceiling=p["ceiling"])
        data = eigensolve(op, p["eigenpairs"], cache=ctx.cache, tolerances=cfg.tolerances)
        out.tables["eigenvalues.csv"] = (SPECTRAL_DATA_COLUMNS, data.rows())
    out.plots["spectrum.svg"] = lambda path: plot_intervals(
        path, {"estimate": estimate.intervals}, title=f"essential spectrum of {cfg.profile.label}"
    )
    return out


def _expect(out: Outcome, name: str, got: str, expected: str) -> None:
    if expected:
        out.check(name, got == expected, f"got {got}, expected {expected}")


def run_affiliate(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    tol = cfg.tolerances
    study = ClassifyConfig(
        L_list=tuple(p["L_list"]),
        k_list=tuple(p["k_list"]),
        s_list=tuple(p["s_list"]),
        points_per_unit=p["points_per_unit"],
        alpha=p["alpha"],
    )
    verdict = classify(cfg.profile, study, tol, mapper=ctx.mapper)
    out.texts["verdict.txt"] = verdict.record_text()
    out.verdicts["affiliation"] = verdict.verdict.value
    _expect(out, "verdict", verdict.verdict.value, p["expect"])

    if len(p["L_list"]) >= 4:
        uni = uniformity_study(
            cfg.profile,
            p["uniformity_s"],
            p["L_list"],
            p["points_per_unit"],
            ceiling=tol.coefficient_ceiling,
            mapper=ctx.mapper,
        )
        out.tables["uniformity.csv"] = (UNIFORMITY_COLUMNS, uni.rows)
        out.verdicts["uniformity_monotone"] = uni.monotone
        out.verdicts["uniformity_sup"] = uni.sup
        Ls = [row[0] for row in uni.rows]
        series = {"sqrt resolvent": [row[2] for row in uni.rows], "resolvent": [row[3] for row in uni.rows]}
        out.plots["uniformity.svg"] = lambda path: plot_series(
            path, Ls, series, xlabel="L", ylabel="norm", title=f"s = {uni.s:g}", logx=True
        )

    if cfg.grid_spec is not None:
        grid, boundary = _grid(ctx)
        if boundary != Boundary.PERIODIC:
            raise UnsupportedError("affiliate sweeps and regularizers need a periodic grid")
        A = resolvent(assemble(cfg.profile, grid, boundary, ceiling=tol.coefficient_ceiling), p["alpha"])
        context = {"L": grid.lengths()[0] / 2, "n": grid.size, "profile": cfg.profile.label}
        vk = vk_sweep(A, grid, p["k_list"], context)
        us = us_sweep(A, grid, p["s_list"], context)
        out.tables["vk_sweep.csv"] = (SWEEP_COLUMNS, vk.rows())
        out.tables["us_sweep.csv"] = (SWEEP_COLUMNS, us.rows())
        out.plots["sweeps.svg"] = lambda path: plot_series(
            path, list(vk.values), {"V_k": list(vk.norms)}, xlabel="k", ylabel="||V_k R V_-k - R||"
        )
        if p["regularizer_budget"] > 0:
            try:
                reg = build_regularizer(A, grid, p["regularizer_budget"])
            except RegularizerError as e:
                out.check("regularizer", False, str(e))
                out.texts["regularizer_evidence.txt"] = "".join(f"{k}: {v}\n" for k, v in sorted(e.evidence.items()))
            else:
                out.tables["regularizer.csv"] = (REGULARIZER_COLUMNS, reg.rows())
                for name, ok in reg.bounds_hold().items():
                    out.check(f"regularizer_{name}", ok)
    return out


def run_liouville(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    window = tuple(p["x_window"])
    method = PotentialMethod(p["method"])
    tr = transform(cfg.profile, window, method)
    table = transform_table(tr, p["table_points"])
    out.tables["transform.csv"] = (TRANSFORM_COLUMNS, table)
    finite = [row for row in table if math.isfinite(row[3])]
    out.plots["potential.svg"] = lambda path: plot_series(
        path, [row[1] for row in finite], {"V": [row[3] for row in finite]}, xlabel="s", ylabel="V(s)"
    )

    report = verify_equivalence(
        cfg.profile,
        window,
        p["n_list"],
        p["count"],
        tolerances=cfg.tolerances,
        samples=p["samples"],
        seed=cfg.seed,
        method=method,
        cache=ctx.cache,
    )
    out.tables["equivalence.csv"] = (EQUIVALENCE_COLUMNS, report.rows)
    out.tables["isometry.csv"] = (ISOMETRY_COLUMNS, [[i, e] for i, e in enumerate(report.isometry_errors)])
    out.verdicts["edge_mass"] = report.edge_mass
    worst = float(report.errors_at(report.finest).max())
    out.check("eigenvalues_agree", report.eigenvalues_agree, f"max relative error {worst:.3g} at n={report.finest}")
    out.check("isometry", report.isometry_holds, f"max isometry error {max(report.isometry_errors):.3g}")

    if p["green"]:
        green = compare_green_functions(tr, line_grid(*tr.s_window, max(p["n_list"])))
        out.tables["green.csv"] = (
            GREEN_COLUMNS,
            [[green.max_excess, green.scale, green.potential_nonnegative, green.bounded]],
        )
        if green.potential_nonnegative:
            out.check("green_bound", green.bounded, f"excess {green.max_excess:.3g}")
    return out


def run_asympt(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    compare = compare_essential(
        cfg.profile,
        family_of(cfg.profile),
        CompareConfig(
            window=tuple(p["window"]),
            L_list=tuple(p["L_list"]),
            points_per_unit=p["points_per_unit"],
            allow_degenerate=p["allow_degenerate"],
            tol_h=p["tol_h"],
        ),
        cfg.tolerances,
        mapper=ctx.mapper,
    )
    out.tables["comparison.csv"] = (COMPARISON_COLUMNS, compare.rows())
    out.verdicts.update(comparison=compare.verdict, hausdorff=compare.distance, tol_h=compare.tol_h)
    _expect(out, "comparison", compare.verdict, p["expect"])
    out.plots["comparison.svg"] = lambda path: plot_intervals(
        path, {"estimate": compare.estimate.intervals, "limit union": compare.union.intervals}
    )

    if p["phi"]:
        c0 = c0_counterexample(p["phi"], p["L_list"], p["points_per_unit"], p["shifts"] or None)
        out.tables["c0_shifts.csv"] = (SHIFT_COLUMNS, c0.shift_rows)
        out.tables["c0_spectrum.csv"] = (C0_SPECTRUM_COLUMNS, c0.spectrum_rows)
        out.check("translates_vanish", c0.translates_vanish, f"last sup {c0.shift_rows[-1][1]:.3g}")
        out.check("spectrum_converges", c0.spectrum_converges)

    if p["infinity_radii"]:
        grid, boundary = _grid(ctx)
        op = assemble(cfg.profile, grid, boundary, ceiling=cfg.tolerances.coefficient_ceiling)
        A = resolvent(op, p["alpha"])
        estimate = spectrum_at_infinity(A, grid, p["infinity_radii"], tolerances=cfg.tolerances)
        seen, rows = set(), []
        for records in estimate.evidence:
            for rec in records:
                if id(rec) not in seen:
                    seen.add(id(rec))
                    rows.append([rec.L, rec.count, rec.lo, rec.hi])
        out.tables["infinity.csv"] = (INFINITY_COLUMNS, sorted(rows))
        out.check("infinity_stable", estimate.conclusive, "estimate moved between the two largest radii")
    return out


def run_heatbound(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    grid, boundary = _grid(ctx)
    op = assemble(cfg.profile, grid, boundary, ceiling=p["ceiling"])
    if p["pairs"] > 0:
        if grid.dim != 1:
            raise UnsupportedError("random (E, F) pairs are drawn on 1D grids; set pairs: 0 for 2D block audits")
        metric = closed_metric(cfg.profile, grid)
        pairs = random_disjoint_pairs(grid, p["pairs"], ctx.rng, p["max_length"])
        audit = verify_heat_bound(op, metric, pairs, p["t_list"], cfg.tolerances)
        out.tables["heat_audit.csv"] = (HEAT_AUDIT_COLUMNS, audit.rows)
        detail = _format_row(HEAT_AUDIT_COLUMNS, audit.violations[0]) if audit.violations else ""
        out.check("heat_bound", audit.passed, f"{len(audit.violations)} violation(s), first {detail}")
        worst = {t: max(row[5] for row in audit.rows if row[2] == t) for t in p["t_list"]}
        out.plots["heat_ratio.svg"] = lambda path: plot_series(
            path, list(worst), {"max ratio": list(worst.values())}, xlabel="t", ylabel="measured / bound", logx=True
        )
    if p["block_t"] is not None:
        window = (grid.lower[0], grid.upper[0]) if grid.dim == 1 else list(zip(grid.lower, grid.upper))
        c = ellipticity_bounds(cfg.profile, window).upper
        if p["ceiling"] is not None:
            c = min(c, p["ceiling"])
        decay = block_heat_decay(op, cube_partition(grid), p["block_t"], c, cfg.tolerances)
        out.tables["block_decay.csv"] = (BLOCK_DECAY_COLUMNS, decay.rows)
        out.verdicts["k_fitted"] = decay.k_fitted
        if decay.tail is not None:
            out.verdicts.update(tail_c=decay.tail.c, tail_k=decay.tail.k, tail_r_squared=decay.tail.r_squared)
        out.check("block_decay", decay.passed)
    return out


def run_manifold(ctx: RunContext) -> Outcome:
    cfg, p, out = ctx.config, ctx.config.parameters, Outcome()
    g = build_graph(cfg.grid_spec)
    # Trees grow exponentially; they are a negative control without pass/fail
    control = cfg.grid_spec.get("kind") == "tree"
    doubling = doubling_constant(g, p["radii"], samples=p["samples"])
    poincare = poincare_constant(g, p["radii"], samples=p["samples"])
    out.tables["doubling.csv"] = (DOUBLING_COLUMNS, doubling.rows)
    out.tables["poincare.csv"] = (POINCARE_COLUMNS, poincare.rows)
    out.verdicts.update(doubling_constant=doubling.value, poincare_constant=poincare.value)

    margin = cfg.tolerances.kernel_margin
    audits = gaussian_audit(g, p["t_list"], margin=margin)
    out.tables["kernel_audit.csv"] = (KERNEL_AUDIT_COLUMNS, [a.row() for a in audits])
    if p["holder_t"] is not None:
        holder = holder_audit(g, p["holder_t"], samples=p["samples"], margin=margin)
        out.tables["holder_audit.csv"] = (HOLDER_COLUMNS, [holder.row()])
        out.tables["holder_scan.csv"] = (HOLDER_SCAN_COLUMNS, holder.scan)
        if not control:
            detail = f"{len(holder.violations)} violation(s) over {holder.pairs} triples"
            out.check("holder", holder.passed, detail)

    fit = truncation_error(g, p["truncation_radii"], p["truncation_t"], cfg.tolerances.noise_floor)
    out.tables["truncation.csv"] = (TRUNCATION_COLUMNS, fit.rows)
    out.verdicts.update(truncation_exponent=fit.exponent, truncation_r_squared=fit.r_squared)
    radii = [row[0] for row in fit.rows]
    errors = {"error": [row[1] for row in fit.rows]}
    out.plots["truncation.svg"] = lambda path: plot_series(path, radii, errors, xlabel="r", ylabel="error", logy=True)
    if not control:
        for audit in audits:
            detail = f"a={audit.exponent:.3g} from t={audit.calibration_t:g}, max ratio {audit.max_ratio:.3g}"
            out.check(f"gaussian_t{audit.t:g}", audit.passed, detail)
        gaussian = fit.exponent > 0 and fit.r_squared >= TRUNCATION_MIN_R2
        out.check("truncation_gaussian", gaussian, f"a={fit.exponent:.3g}, R^2={fit.r_squared:.3f}")
        out.check("truncation_monotone", fit.monotone)
        out.check("truncation_schur", fit.within_schur)
    return out


# ---------------------------------------------------------------------------
# Registry: single source of truth for all commands
# ---------------------------------------------------------------------------

_EXPECT_VERDICT = ("", "E_affiliated", "D_only", "inconclusive")

COMMAND_REGISTRY: dict[str, Command] = {
    "assemble": Command(
        name="assemble",
        description="Assemble H on a grid, export triplets and optionally the lowest eigenpairs",
        profile="required",
        grid="required",
        params=(
            Param("eigenpairs", "int", 0),
            Param("triplets", "bool", True),
            Param("ceiling", "optional_float", None),
        ),
        runner=run_assemble,
    ),
    "spectrum": Command(
        name="spectrum",
        description="Essential-spectrum estimate from growing boxes and both boundary conditions",
        profile="required",
        grid="optional",
        params=(
            Param("L_list", "floats", (10.0, 20.0, 40.0)),
            Param("points_per_unit", "float", 8.0),
            Param("window", "floats", (0.0, 10.0)),
            Param("ceiling", "optional_float", None),
            Param("eigenpairs", "int", 0),
        ),
        runner=run_spectrum,
    ),
    "affiliate": Command(
        name="affiliate",
        description="Classify the resolvent as E-affiliated or D-only from phase and translation sweeps",
        profile="required",
        grid="optional",
        params=(
            Param("L_list", "floats", (10.0, 20.0, 40.0, 80.0)),
            Param("k_list", "floats", (0.01, 0.02, 0.05, 0.1)),
            Param("s_list", "floats", (0.25, 0.5, 1.0)),
            Param("points_per_unit", "float", 8.0),
            Param("alpha", "float", 1.0),
            Param("uniformity_s", "float", 1.0),
            Param("regularizer_budget", "int", 0),
            Param("expect", "str", "", _EXPECT_VERDICT),
        ),
        runner=run_affiliate,
    ),
    "liouville": Command(
        name="liouville",
        description="Liouville transform table, eigenvalue equivalence and isometry check",
        profile="required",
        grid="none",
        params=(
            Param("x_window", "floats", (-8.0, 0.0)),
            Param("n_list", "ints", (1024, 2048)),
            Param("count", "int", 5),
            Param("samples", "int", 50),
            Param("method", "str", "analytic", tuple(m.value for m in PotentialMethod)),
            Param("table_points", "int", 257),
            Param("green", "bool", False),
        ),
        runner=run_liouville,
    ),
    "asympt": Command(
        name="asympt",
        description="Compare the essential spectrum with the union over asymptotic operators",
        profile="required",
        grid="optional",
        params=(
            Param("window", "floats", (0.0, 10.0)),
            Param("L_list", "floats", (20.0, 40.0, 80.0)),
            Param("points_per_unit", "float", 8.0),
            Param("allow_degenerate", "bool", True),
            Param("tol_h", "optional_float", None),
            Param("expect", "str", "", ("", "agree", "disagree")),
            Param("phi", "str", "", ("", *PHI_LIBRARY)),
            Param("shifts", "floats", ()),
            Param("infinity_radii", "floats", ()),
            Param("alpha", "float", 1.0),
        ),
        runner=run_asympt,
    ),
    "heatbound": Command(
        name="heatbound",
        description="Audit Gaussian off-diagonal heat bounds on random set pairs and cube blocks",
        profile="required",
        grid="required",
        params=(
            Param("pairs", "int", 20),
            Param("t_list", "floats", (0.05, 0.1, 0.5, 1.0)),
            Param("max_length", "float", 1.0),
            Param("block_t", "optional_float", None),
            Param("ceiling", "optional_float", None),
        ),
        runner=run_heatbound,
    ),
    "manifold": Command(
        name="manifold",
        description="Doubling, Poincare, Gaussian kernel and truncation audits on a weighted graph",
        profile="none",
        grid="graph",
        params=(
            Param("radii", "floats", (1.0, 2.0, 4.0)),
            Param("samples", "int", 32),
            Param("t_list", "floats", (4.0, 8.0)),
            Param("holder_t", "optional_float", None),
            Param("truncation_radii", "floats", (2.0, 3.0, 4.0, 5.0, 6.0)),
            Param("truncation_t", "float", 1.0),
        ),
        runner=run_manifold,
    ),
    "report": Command(
        name="report",
        description="Aggregate result records into one summary and exit by their checks",
        profile="none",
        grid="none",
        params=(Param("records", "strs", ()),),
    ),
}


def get_command(name: str) -> Command | None:
    return COMMAND_REGISTRY.get(name)


def command_names() -> list[str]:
    return list(COMMAND_REGISTRY)
