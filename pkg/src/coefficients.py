"""Coefficient fields a(x) for divergence-form operators.

A ``CoefficientProfile`` is an immutable description of a built-in family
(or a tabulated field) together with a translation offset, so translates are
cheap and exact: ``evaluate(translate(p, c), x)`` computes ``a(x + c)`` from
the same closed form.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from src.errors import AnalyticDerivativeError, ArgumentError, ConfigError, DomainError, UnsupportedError

logger = logging.getLogger(__name__)

# Smoothness reported for closed forms that are C-infinity
ANALYTIC = 99


class ProfileKind(Enum):
    UNIFORM = "Uniform"
    EXP_DECAY = "ExpDecay"
    POWER = "Power"
    PERIODIC = "Periodic"
    RATIONAL_BUMP = "RationalBump"
    TABULATED = "Tabulated"
    MATRIX_DIAG_2D = "MatrixDiag2D"
    BLEND = "Blend"


@dataclass(frozen=True)
class CoefficientProfile:
    """A coefficient field a(x), scalar or 2x2 symmetric positive definite.

    ``domain`` holds one (lower, upper) pair per axis, with infinite ends
    allowed. ``open_ends`` marks finite endpoints that are excluded (the
    Power family vanishes at 0). ``offset`` is the accumulated translation.
    """

    kind: ProfileKind
    params: tuple[float, ...]
    domain: tuple[tuple[float, float], ...]
    smoothness: int
    offset: tuple[float, ...] = (0.0,)
    degenerate: bool = False
    open_ends: bool = False
    samples: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    declared_limits: tuple["CoefficientProfile", ...] | None = None
    tag: str = ""

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def is_matrix(self) -> bool:
        return self.kind == ProfileKind.MATRIX_DIAG_2D

    @property
    def label(self) -> str:
        if self.tag:
            return self.tag
        args = ",".join(f"{p:g}" for p in self.params)
        shift = "" if not any(self.offset) else "@" + ",".join(f"{c:g}" for c in self.offset)
        return f"{self.kind.value}({args}){shift}"


@dataclass(frozen=True)
class EllipticityBounds:
    """inf and sup of a over a window; 0 and inf stand for the zero and infinity flags."""

    lower: float
    upper: float

    @property
    def lower_is_zero(self) -> bool:
        return self.lower == 0.0

    @property
    def upper_is_infinite(self) -> bool:
        return math.isinf(self.upper)

    @property
    def uniformly_elliptic(self) -> bool:
        return self.lower > 0.0


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

_LINE = ((-math.inf, math.inf),)


def uniform(c: float, dim: int = 1) -> CoefficientProfile:
    if c < 0:
        raise ArgumentError(f"Uniform coefficient must be nonnegative, got {c}")
    if dim not in (1, 2):
        raise ArgumentError(f"dim must be 1 or 2, got {dim}")
    return CoefficientProfile(
        kind=ProfileKind.UNIFORM,
        params=(float(c),),
        domain=_LINE * dim,
        smoothness=ANALYTIC,
        offset=(0.0,) * dim,
        degenerate=(c == 0),
    )


def exp_decay(rate: float) -> CoefficientProfile:
    if rate <= 0:
        raise ArgumentError(f"ExpDecay rate must be positive, got {rate}")
    return CoefficientProfile(ProfileKind.EXP_DECAY, (float(rate),), _LINE, ANALYTIC)


def power(alpha: float) -> CoefficientProfile:
    if not 0 < alpha < 2:
        raise ArgumentError(f"Power exponent must lie in (0, 2), got {alpha}")
    return CoefficientProfile(ProfileKind.POWER, (float(alpha),), ((0.0, math.inf),), ANALYTIC, open_ends=True)


def periodic(mean: float, amp: float, period: float) -> CoefficientProfile:
    if period <= 0:
        raise ArgumentError(f"Periodic period must be positive, got {period}")
    if mean <= abs(amp):
        raise ArgumentError(f"Periodic profile needs mean > |amp| for positivity, got mean={mean}, amp={amp}")
    return CoefficientProfile(ProfileKind.PERIODIC, (float(mean), float(amp), float(period)), _LINE, ANALYTIC)


def rational_bump(width: float = 1.0) -> CoefficientProfile:
    if width <= 0:
        raise ArgumentError(f"RationalBump width must be positive, got {width}")
    return CoefficientProfile(ProfileKind.RATIONAL_BUMP, (float(width),), _LINE, ANALYTIC)


def blend(
    left: float,
    right: float,
    center: float = 0.0,
    width: float = 1.0,
    bump: float = 0.0,
    bump_width: float = 1.0,
) -> CoefficientProfile:
    """tanh interpolation from ``left`` to ``right`` plus an optional compact C2 bump."""
    if left <= 0 or right <= 0:
        raise ArgumentError(f"Blend end values must be positive, got {left}, {right}")
    if width <= 0 or bump_width <= 0:
        raise ArgumentError("Blend widths must be positive")
    if bump < 0 and -bump >= min(left, right):
        raise ArgumentError(f"Blend bump {bump} would make the coefficient nonpositive")
    params = (float(left), float(right), float(center), float(width), float(bump), float(bump_width))
    return CoefficientProfile(ProfileKind.BLEND, params, _LINE, 2 if bump else ANALYTIC)


def matrix_diag_2d(
    l1: float, l2: float, theta: float = 0.0, amp: float = 0.0, width: float = 1.0
) -> CoefficientProfile:
    """(1 + amp*exp(-|x|^2/width^2)) * R(theta) diag(l1, l2) R(theta)^T."""
    if l1 <= 0 or l2 <= 0:
        raise ArgumentError(f"MatrixDiag2D eigenvalues must be positive, got {l1}, {l2}")
    if amp <= -1:
        raise ArgumentError(f"MatrixDiag2D amplitude must exceed -1, got {amp}")
    if width <= 0:
        raise ArgumentError(f"MatrixDiag2D width must be positive, got {width}")
    params = (float(l1), float(l2), float(theta), float(amp), float(width))
    return CoefficientProfile(ProfileKind.MATRIX_DIAG_2D, params, _LINE * 2, ANALYTIC, offset=(0.0, 0.0))


def tabulated(x, a, limits: list[CoefficientProfile] | None = None) -> CoefficientProfile:
    xs = np.asarray(x, dtype=float)
    values = np.asarray(a, dtype=float)
    if xs.ndim != 1 or xs.shape != values.shape or len(xs) < 2:
        raise ArgumentError("Tabulated profile needs matching 1D sample arrays of length >= 2")
    if np.any(np.diff(xs) <= 0):
        raise ArgumentError("Tabulated sample positions must be strictly increasing")
    if np.any(values <= 0):
        raise ArgumentError("Tabulated sample values must be positive")
    return CoefficientProfile(
        kind=ProfileKind.TABULATED,
        params=(),
        domain=((float(xs[0]), float(xs[-1])),),
        smoothness=1,
        samples=(tuple(xs.tolist()), tuple(values.tolist())),
        declared_limits=tuple(limits) if limits is not None else None,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _check_domain(profile: CoefficientProfile, pts: np.ndarray) -> None:
    coords = pts[..., None] if profile.dim == 1 else pts
    if coords.shape[-1] != profile.dim:
        raise DomainError(f"{profile.label} expects {profile.dim}-dimensional points, got shape {pts.shape}")
    for axis, (lo, hi) in enumerate(profile.domain):
        c = coords[..., axis]
        if profile.open_ends:
            bad = ~((c > lo) & (c < hi))
        else:
            bad = ~((c >= lo) & (c <= hi))
        if np.any(bad):
            first = float(np.asarray(c)[bad].flat[0])
            raise DomainError(f"{first} lies outside the domain {profile.domain} of {profile.label}")


def _pchip(profile: CoefficientProfile) -> PchipInterpolator:
    xs, values = profile.samples
    return PchipInterpolator(np.asarray(xs), np.asarray(values), extrapolate=False)


def _raw(profile: CoefficientProfile, y: np.ndarray) -> np.ndarray:
    """Closed form at already-shifted coordinates."""
    p = profile.params
    kind = profile.kind
    if kind == ProfileKind.UNIFORM:
        shape = y.shape if profile.dim == 1 else y.shape[:-1]
        return np.full(shape, p[0])
    if kind == ProfileKind.EXP_DECAY:
        return np.exp(-p[0] * y)
    if kind == ProfileKind.POWER:
        return np.power(y, p[0])
    if kind == ProfileKind.PERIODIC:
        mean, amp, period = p
        return mean + amp * np.sin(2 * np.pi * y / period)
    if kind == ProfileKind.RATIONAL_BUMP:
        return 1.0 / (1.0 + (y / p[0]) ** 2)
    if kind == ProfileKind.BLEND:
        left, right, center, width, bump, bump_width = p
        value = left + (right - left) * 0.5 * (1.0 + np.tanh((y - center) / width))
        if bump:
            v = (y - center) / bump_width
            value = value + bump * np.where(np.abs(v) < 1, (1 - v**2) ** 3, 0.0)
        return value
    if kind == ProfileKind.TABULATED:
        return _pchip(profile)(y)
    if kind == ProfileKind.MATRIX_DIAG_2D:
        l1, l2, theta, amp, width = p
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        base = rot @ np.diag([l1, l2]) @ rot.T
        scale = 1.0 + amp * np.exp(-np.sum(y**2, axis=-1) / width**2)
        return scale[..., None, None] * base
    raise UnsupportedError(f"Unknown profile kind {kind}")


def evaluate(profile: CoefficientProfile, x) -> np.ndarray:
    """a(x) at a point or an array of points.

    1D profiles accept any array shape; 2D profiles take points along the
    last axis and return scalars or 2x2 matrices per point.
    """
    pts = np.asarray(x, dtype=float)
    _check_domain(profile, pts)
    shift = profile.offset[0] if profile.dim == 1 else np.asarray(profile.offset)
    return _raw(profile, pts + shift)


def derivative(profile: CoefficientProfile, x, order: int) -> np.ndarray:
    """Analytic first or second derivative of a scalar 1D profile."""
    if order not in (1, 2):
        raise ArgumentError(f"derivative order must be 1 or 2, got {order}")
    if profile.is_matrix or profile.dim != 1:
        raise UnsupportedError(f"derivatives are only provided for scalar 1D profiles, not {profile.label}")
    if profile.smoothness < order:
        raise AnalyticDerivativeError(
            f"{profile.label} is only C^{profile.smoothness}; derivative of order {order} is not available"
        )
    pts = np.asarray(x, dtype=float)
    _check_domain(profile, pts)
    y = pts + profile.offset[0]
    p = profile.params
    kind = profile.kind
    if kind == ProfileKind.UNIFORM:
        return np.zeros_like(y)
    if kind == ProfileKind.EXP_DECAY:
        return (-p[0]) ** order * np.exp(-p[0] * y)
    if kind == ProfileKind.POWER:
        alpha = p[0]
        if order == 1:
            return alpha * np.power(y, alpha - 1)
        return alpha * (alpha - 1) * np.power(y, alpha - 2)
    if kind == ProfileKind.PERIODIC:
        _, amp, period = p
        w = 2 * np.pi / period
        if order == 1:
            return amp * w * np.cos(w * y)
        return -amp * w**2 * np.sin(w * y)
    if kind == ProfileKind.RATIONAL_BUMP:
        width = p[0]
        u = y / width
        if order == 1:
            return -2 * u / (width * (1 + u**2) ** 2)
        return (6 * u**2 - 2) / (width**2 * (1 + u**2) ** 3)
    if kind == ProfileKind.BLEND:
        left, right, center, width, bump, bump_width = p
        t = np.tanh((y - center) / width)
        half = 0.5 * (right - left)
        if order == 1:
            value = half * (1 - t**2) / width
        else:
            value = half * (-2 * t * (1 - t**2)) / width**2
        if bump:
            v = (y - center) / bump_width
            inside = np.abs(v) < 1
            if order == 1:
                term = -6 * v * (1 - v**2) ** 2 / bump_width
            else:
                term = (-6 * (1 - v**2) ** 2 + 24 * v**2 * (1 - v**2)) / bump_width**2
            value = value + bump * np.where(inside, term, 0.0)
        return value
    if kind == ProfileKind.TABULATED:
        return _pchip(profile).derivative(order)(y)
    raise UnsupportedError(f"No analytic derivative for {profile.label}")


# ---------------------------------------------------------------------------
# Ellipticity bounds
# ---------------------------------------------------------------------------


def _safe_exp(v: float) -> float:
    return math.inf if v > 709.0 else math.exp(v)


def _scalar_extremes(profile: CoefficientProfile, lo: float, hi: float) -> tuple[float, float]:
    """inf/sup of a scalar 1D profile over the window [lo, hi]."""
    p = profile.params
    off = profile.offset[0]
    ylo, yhi = lo + off, hi + off
    kind = profile.kind
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if kind == ProfileKind.UNIFORM:
            return p[0], p[0]
        if kind == ProfileKind.EXP_DECAY:
            return _safe_exp(-p[0] * yhi), _safe_exp(-p[0] * ylo)
        if kind == ProfileKind.POWER:
            return max(ylo, 0.0) ** p[0], yhi ** p[0]
        if kind == ProfileKind.PERIODIC:
            mean, amp, period = p
            if yhi - ylo >= period:
                return mean - abs(amp), mean + abs(amp)
            candidates = [ylo, yhi]
            k = math.floor((ylo - period / 4) / (period / 2))
            while True:
                crit = period / 4 + k * period / 2
                if crit > yhi:
                    break
                if crit >= ylo:
                    candidates.append(crit)
                k += 1
            values = mean + amp * np.sin(2 * np.pi * np.array(candidates) / period)
            return float(values.min()), float(values.max())
        if kind == ProfileKind.RATIONAL_BUMP:
            width = p[0]

            def at(y):
                return 0.0 if math.isinf(y) else 1.0 / (1.0 + (y / width) ** 2)

            upper = 1.0 if ylo <= 0.0 <= yhi else max(at(ylo), at(yhi))
            return min(at(ylo), at(yhi)), upper
        if kind == ProfileKind.BLEND:
            left, right, center, width, bump, bump_width = p

            def f(y):
                return float(_raw(profile, np.asarray(y)))

            ends = [left if ylo == -math.inf else f(ylo), right if yhi == math.inf else f(yhi)]
            if not bump:
                return min(ends), max(ends)
            blo, bhi = max(ylo, center - bump_width), min(yhi, center + bump_width)
            candidates = list(ends)
            if blo < bhi:
                for sign in (1.0, -1.0):
                    res = minimize_scalar(
                        lambda y, s=sign: s * f(y), bounds=(blo, bhi), method="bounded", options={"xatol": 1e-12}
                    )
                    candidates.append(f(res.x))
                candidates.extend([f(blo), f(bhi)])
            return min(candidates), max(candidates)
        if kind == ProfileKind.TABULATED:
            xs, values = (np.asarray(s) for s in profile.samples)
            clo, chi = max(ylo, xs[0]), min(yhi, xs[-1])
            inside = values[(xs >= clo) & (xs <= chi)]
            ends = _pchip(profile)(np.array([clo, chi]))
            pool = np.concatenate([inside, ends])
            if profile.declared_limits and (math.isinf(ylo) or math.isinf(yhi)):
                for limit in profile.declared_limits:
                    lim_lo, lim_hi = _scalar_extremes(limit, -math.inf, math.inf)
                    pool = np.concatenate([pool, [lim_lo, lim_hi]])
            return float(pool.min()), float(pool.max())
    raise UnsupportedError(f"No ellipticity bounds for {profile.label}")


def ellipticity_bounds(profile: CoefficientProfile, window) -> EllipticityBounds:
    """Tight inf/sup of a (of its eigenvalues for matrix fields) over a window."""
    if profile.kind == ProfileKind.MATRIX_DIAG_2D:
        box = list(window)
        l1, l2, _, amp, width = profile.params
        # |x|^2 over the shifted box: nearest and farthest points from the origin
        near, far = 0.0, 0.0
        for axis, (lo, hi) in enumerate(box):
            a, b = lo + profile.offset[axis], hi + profile.offset[axis]
            near += 0.0 if a <= 0.0 <= b else min(a * a, b * b)
            far += max(a * a, b * b)
        g_max = math.exp(-near / width**2)
        g_min = 0.0 if math.isinf(far) else math.exp(-far / width**2)
        scales = (1 + amp * g_min, 1 + amp * g_max)
        return EllipticityBounds(min(l1, l2) * min(scales), max(l1, l2) * max(scales))
    if profile.dim != 1:
        c = profile.params[0]
        return EllipticityBounds(c, c)
    lo, hi = (float(v) for v in window)
    if lo > hi:
        raise ArgumentError(f"window lower end {lo} exceeds upper end {hi}")
    dlo, dhi = profile.domain[0]
    lo, hi = max(lo, dlo), min(hi, dhi)
    lower, upper = _scalar_extremes(profile, lo, hi)
    return EllipticityBounds(float(lower), float(upper))


# ---------------------------------------------------------------------------
# Translation and limits at infinity
# ---------------------------------------------------------------------------


def translate(profile: CoefficientProfile, c) -> CoefficientProfile:
    """Profile evaluating to a(x + c), with the domain shifted by -c."""
    if profile.kind == ProfileKind.UNIFORM:
        return profile
    shift = (float(c),) if np.ndim(c) == 0 else tuple(float(v) for v in c)
    if len(shift) != profile.dim:
        raise ArgumentError(f"shift {c} does not match the dimension of {profile.label}")
    domain = tuple((lo - s, hi - s) for (lo, hi), s in zip(profile.domain, shift))
    offset = tuple(o + s for o, s in zip(profile.offset, shift))
    return replace(profile, domain=domain, offset=offset)


def asymptotic_limits(profile: CoefficientProfile) -> list[tuple[str, CoefficientProfile]]:
    """(direction, limit profile) pairs for |c| -> infinity, duplicates removed."""
    kind = profile.kind
    if kind == ProfileKind.UNIFORM:
        return [("all", profile)]
    if kind == ProfileKind.BLEND:
        left, right = profile.params[0], profile.params[1]
        if left == right:
            return [("±inf", uniform(left))]
        return [("-inf", uniform(left)), ("+inf", uniform(right))]
    if kind == ProfileKind.PERIODIC:
        return [("orbit", replace(profile, offset=(0.0,), domain=_LINE))]
    if kind == ProfileKind.RATIONAL_BUMP:
        return [("±inf", uniform(0.0))]
    if kind == ProfileKind.EXP_DECAY:
        # a -> infinity towards -inf has no limit coefficient
        return [("+inf", uniform(0.0))]
    if kind == ProfileKind.POWER:
        return []
    if kind == ProfileKind.MATRIX_DIAG_2D:
        l1, l2, theta, _, width = profile.params
        return [("all", matrix_diag_2d(l1, l2, theta, 0.0, width))]
    if kind == ProfileKind.TABULATED:
        if profile.declared_limits is None:
            raise UnsupportedError(f"{profile.label} has no declared limits; add 'limits' to the profile config")
        pairs, seen = [], set()
        for limit in profile.declared_limits:
            if limit not in seen:
                seen.add(limit)
                pairs.append(("declared", limit))
        return pairs
    raise UnsupportedError(f"No asymptotic limits for {profile.label}")


def asymptotic_profiles(profile: CoefficientProfile) -> list[CoefficientProfile]:
    """Every distinct limit of translate(profile, c_n) along |c_n| -> infinity."""
    out: list[CoefficientProfile] = []
    for _, limit in asymptotic_limits(profile):
        if limit not in out:
            out.append(limit)
    return out


# ---------------------------------------------------------------------------
# Config and digests
# ---------------------------------------------------------------------------

_BUILDERS = {
    ProfileKind.UNIFORM: uniform,
    ProfileKind.EXP_DECAY: exp_decay,
    ProfileKind.POWER: power,
    ProfileKind.PERIODIC: periodic,
    ProfileKind.RATIONAL_BUMP: rational_bump,
    ProfileKind.MATRIX_DIAG_2D: matrix_diag_2d,
    ProfileKind.BLEND: blend,
}

PROFILE_KEYS = {"kind", "params", "dim", "samples", "limits", "offset", "tag"}


def profile_from_spec(spec: dict, path: str = "profile") -> CoefficientProfile:
    """Build a profile from its run-config mapping (kind name plus parameter list)."""
    if not isinstance(spec, dict):
        raise ConfigError(f"'{path}' must be a mapping", key=path)
    unknown = set(spec) - PROFILE_KEYS
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"Unknown key '{name}' in {path}", key=f"{path}.{name}")
    try:
        kind = ProfileKind(spec.get("kind"))
    except ValueError:
        valid = ", ".join(k.value for k in ProfileKind)
        raise ConfigError(f"'{path}.kind' must be one of: {valid}", key=f"{path}.kind") from None
    params = spec.get("params", [])
    if not isinstance(params, list) or not all(isinstance(v, (int, float)) for v in params):
        raise ConfigError(f"'{path}.params' must be a list of numbers", key=f"{path}.params")
    try:
        if kind == ProfileKind.TABULATED:
            samples = spec.get("samples")
            if not isinstance(samples, dict) or set(samples) != {"x", "a"}:
                raise ConfigError(f"'{path}.samples' must have exactly 'x' and 'a' lists", key=f"{path}.samples")
            limits = spec.get("limits")
            if limits is not None:
                if not isinstance(limits, list):
                    raise ConfigError(f"'{path}.limits' must be a list of profiles", key=f"{path}.limits")
                limits = [profile_from_spec(item, f"{path}.limits[{i}]") for i, item in enumerate(limits)]
            profile = tabulated(samples["x"], samples["a"], limits)
        elif kind == ProfileKind.UNIFORM:
            profile = uniform(*params, dim=int(spec.get("dim", 1)))
        else:
            if "dim" in spec:
                raise ConfigError(f"'{path}.dim' only applies to Uniform profiles", key=f"{path}.dim")
            profile = _BUILDERS[kind](*params)
    except TypeError as e:
        raise ConfigError(f"Wrong number of params for {kind.value}: {e}", key=f"{path}.params") from None
    except ArgumentError as e:
        raise ConfigError(str(e), key=f"{path}.params") from None
    if "offset" in spec:
        profile = translate(profile, spec["offset"])
    if "tag" in spec:
        profile = replace(profile, tag=str(spec["tag"]))
    return profile


def _canonical(profile: CoefficientProfile) -> dict:
    return {
        "kind": profile.kind.value,
        "params": list(profile.params),
        "domain": [list(d) for d in profile.domain],
        "offset": list(profile.offset),
        "degenerate": profile.degenerate,
        "samples": [list(s) for s in profile.samples] if profile.samples else None,
        "limits": [_canonical(p) for p in profile.declared_limits] if profile.declared_limits else None,
    }


def profile_digest(profile: CoefficientProfile) -> str:
    payload = json.dumps(_canonical(profile), sort_keys=True, default=repr)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
