"""Closed-form rate functions for BBM conditioned on a low maximum.

All rates are per unit of the time horizon ``t``: a probability of order
``exp(-t * value)``.  Locations are reported as coefficients of ``t``.

The constrained rates pin or restrict the first branching time ``tau`` (as a
fraction ``gamma`` of ``t``) and the first branching location ``y`` (relative
to the line ``sqrt(2)*alpha*t - sqrt(2)*beta*(t - tau)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

SQRT2 = math.sqrt(2.0)
RHO = SQRT2 - 1.0


@dataclass(frozen=True)
class MathConstants:
    sqrt2: float = SQRT2
    rho: float = RHO


CONSTANTS = MathConstants()


class DomainError(ValueError):
    """A query lies outside the parameter range where a formula is defined."""


class Theorem(str, Enum):
    UNCONSTRAINED = "unconstrained"
    TIME = "time"
    TIME_LATE = "time_late"
    LOC_BELOW = "location_below"
    LOC_ABOVE = "location_above"


class Region(str, Enum):
    I1 = "I1"
    I2 = "I2"
    I3 = "I3"
    NONE = "NONE"


N_CASES = {
    Theorem.UNCONSTRAINED: 2,
    Theorem.TIME: 4,
    Theorem.TIME_LATE: 2,
    Theorem.LOC_BELOW: 2,
    Theorem.LOC_ABOVE: 5,
}


@dataclass(frozen=True)
class RegimeLabel:
    theorem: Theorem
    case_index: int
    region: Region

    def __post_init__(self):
        if not 1 <= self.case_index <= N_CASES[self.theorem]:
            raise ValueError(f"case {self.case_index} invalid for {self.theorem.value}")


@dataclass(frozen=True)
class RateEvaluation:
    value: float
    regime: RegimeLabel
    opt_tau_fraction: float
    opt_loc_coeff: float

    def as_dict(self) -> dict:
        return {
            "theorem": self.regime.theorem.value,
            "case": self.regime.case_index,
            "region": self.regime.region.value,
            "value": self.value,
            "tau_over_t": self.opt_tau_fraction,
            "y_over_t": self.opt_loc_coeff,
        }


@dataclass(frozen=True)
class RegimeThresholds:
    t1: float
    t2: float
    t3: float
    t4: float
    beta1: float
    beta2: float
    child_switch: float


class ExponentKind(str, Enum):
    I11 = "I11"
    I12 = "I12"
    I21 = "I21"
    I22 = "I22"
    I31 = "I31"
    I32 = "I32"


@dataclass(frozen=True)
class ExponentArgs:
    kind: ExponentKind
    x: float
    slope: float = 0.0
    alpha: float = 0.0


# --------------------------------------------------------------------------
# validation helpers


def _check_alpha(alpha: float) -> None:
    if not alpha < 1.0:
        raise DomainError(f"alpha must be < 1 (got {alpha})")


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1] (got {gamma})")


# --------------------------------------------------------------------------
# unconstrained rate and the typical maximum


def psi(alpha: float) -> float:
    """Decay rate of P(X_max(t) <= sqrt(2)*alpha*t)."""
    _check_alpha(alpha)
    if alpha >= -RHO:
        return 2.0 * RHO * (1.0 - alpha)
    return 1.0 + alpha * alpha


def psi_eval(alpha: float) -> RateEvaluation:
    """Unconstrained rate together with the optimal first branching point."""
    value = psi(alpha)
    if alpha >= -RHO:
        tau = (1.0 - alpha) / SQRT2
        return RateEvaluation(value, RegimeLabel(Theorem.UNCONSTRAINED, 1, Region.I1),
                              tau, -RHO * (1.0 - alpha))
    return RateEvaluation(value, RegimeLabel(Theorem.UNCONSTRAINED, 2, Region.I1),
                          1.0, SQRT2 * alpha)


def typical_max(t: float) -> float:
    """Leading-order position of the maximum, sqrt(2) t - 3/(2 sqrt 2) ln t."""
    if not t > 1.0:
        raise DomainError(f"typical_max requires t > 1 (got {t})")
    return SQRT2 * t - 3.0 / (2.0 * SQRT2) * math.log(t)


# --------------------------------------------------------------------------
# the I-exponents


def i11(x, y, alpha):
    return x + (alpha - y * (1.0 - x)) ** 2 / x


def i12(x):
    return x


def i21(x, y, alpha):
    return (-(4.0 * RHO * (1.0 - y) - 1.0 - y * y) * x + (alpha - y) ** 2 / x
            + 4.0 * RHO * (1.0 - y) + 2.0 * y * (alpha - y))


def i22(x, alpha):
    return -(4.0 * SQRT2 * RHO - 1.0) * x + 4.0 * RHO * (1.0 - alpha)


def i31(x, y, alpha):
    return -(1.0 + y * y) * x + (alpha - y) ** 2 / x + 2.0 * (alpha * y + 1.0)


def i32(x, alpha):
    return -x + 2.0 * alpha * alpha / (1.0 + x) + 2.0


def exponent(args: ExponentArgs) -> float:
    if not args.x > 0.0:
        raise DomainError(f"exponent argument x must be > 0 (got {args.x})")
    kind = ExponentKind(args.kind)
    x, y, a = args.x, args.slope, args.alpha
    if kind is ExponentKind.I11:
        return i11(x, y, a)
    if kind is ExponentKind.I12:
        return i12(x)
    if kind is ExponentKind.I21:
        return i21(x, y, a)
    if kind is ExponentKind.I22:
        return i22(x, a)
    if kind is ExponentKind.I31:
        return i31(x, y, a)
    return i32(x, a)


# --------------------------------------------------------------------------
# thresholds


def thresholds(alpha: float, gamma: float) -> RegimeThresholds:
    _check_alpha(alpha)
    _check_gamma(gamma)
    t1 = -(alpha + RHO) / RHO
    t2 = (1.0 - alpha) / (2.0 * SQRT2 - 1.0)
    t3 = (1.0 - alpha) / SQRT2
    t4 = 1.0 - alpha
    if gamma < 1.0:
        beta1 = alpha / (1.0 - gamma)
        beta2 = (alpha + 2.0 * RHO * gamma) / (1.0 - gamma)
    else:
        beta1 = math.inf
        beta2 = -math.inf if alpha < -2.0 * RHO else math.inf
    return RegimeThresholds(t1, t2, t3, t4, beta1, beta2, alpha / (1.0 + gamma))


# --------------------------------------------------------------------------
# constrained rates


def psi1(alpha: float, gamma: float) -> RateEvaluation:
    """First branching no later than gamma*t."""
    th = thresholds(alpha, gamma)
    tau = min(gamma, th.t3)
    if gamma <= min(th.t1, 1.0):
        case, region = 1, Region.I3
        value = i32(gamma, alpha)
        y = 2.0 * SQRT2 * alpha * gamma / (1.0 + gamma)
    elif gamma <= min(th.t2, 1.0):
        case, region = 2, Region.I2
        value = i22(gamma, alpha)
        y = -2.0 * SQRT2 * RHO * gamma
    elif gamma <= min(th.t3, 1.0):
        case, region = 3, Region.I1
        value = i11(gamma, 1.0, alpha)
        y = SQRT2 * alpha - SQRT2 * (1.0 - gamma)
    else:
        case, region = 4, Region.I1
        value = 2.0 * RHO * (1.0 - alpha)
        y = -RHO * (1.0 - alpha)
    return RateEvaluation(value, RegimeLabel(Theorem.TIME, case, region), tau, y)


def psi2(alpha: float, gamma: float) -> RateEvaluation:
    """First branching no earlier than gamma*t, for gamma past the free optimum."""
    if not -RHO < alpha < 1.0:
        raise DomainError(f"psi2 requires -rho < alpha < 1 (got alpha={alpha})")
    _check_gamma(gamma)
    if not gamma > (1.0 - alpha) / SQRT2:
        raise DomainError(
            f"psi2 requires gamma > (1-alpha)/sqrt2 = {(1.0 - alpha) / SQRT2:.10g} (got {gamma})")
    # branching in place needs the no-branch path to end below the level,
    # so the second case is gamma >= 1 - alpha (never at gamma = 1 with alpha < 0)
    if 1.0 - gamma > alpha:
        value = i11(gamma, 1.0, alpha)
        return RateEvaluation(value, RegimeLabel(Theorem.TIME_LATE, 1, Region.I1),
                              gamma, SQRT2 * alpha - SQRT2 * (1.0 - gamma))
    return RateEvaluation(gamma, RegimeLabel(Theorem.TIME_LATE, 2, Region.I1), gamma, 0.0)


def psi3(alpha: float, gamma: float, beta: float) -> RateEvaluation:
    """First branching at gamma*t, at or below the beta-line (beta >= 1)."""
    _check_alpha(alpha)
    _check_gamma(gamma)
    if not beta >= 1.0:
        raise DomainError(f"psi3 requires beta >= 1 (got {beta})")
    # branching in place (y = 0) is admissible iff beta*(1-gamma) <= alpha;
    # for gamma < 1 this reads beta <= beta1.
    if beta * (1.0 - gamma) <= alpha:
        return RateEvaluation(gamma, RegimeLabel(Theorem.LOC_BELOW, 1, Region.I1), gamma, 0.0)
    value = i11(gamma, beta, alpha)
    y = SQRT2 * alpha - SQRT2 * beta * (1.0 - gamma)
    return RateEvaluation(value, RegimeLabel(Theorem.LOC_BELOW, 2, Region.I1), gamma, y)


def psi4(alpha: float, gamma: float, beta: float) -> RateEvaluation:
    """First branching at gamma*t, at or above the beta-line (beta <= 1)."""
    th = thresholds(alpha, gamma)
    if not beta <= 1.0:
        raise DomainError(f"psi4 requires beta <= 1 (got {beta})")
    line = SQRT2 * alpha - SQRT2 * beta * (1.0 - gamma)
    if gamma < min(th.t1, 1.0):
        if beta < th.child_switch:
            case, value, y = 1, i31(gamma, beta, alpha), line
        else:
            case, value, y = 2, i32(gamma, alpha), 2.0 * SQRT2 * alpha * gamma / (1.0 + gamma)
        region = Region.I3
    elif beta <= -RHO:
        case, value, y, region = 3, i31(gamma, beta, alpha), line, Region.I3
    elif gamma < 1.0 and beta >= th.beta2:
        case, value, y, region = 5, i22(gamma, alpha), -2.0 * SQRT2 * RHO * gamma, Region.I2
    else:
        # includes beta = 1 < beta2 and the degenerate gamma = 1 row, where the
        # I2 Gaussian centre is not admissible
        case, value, y, region = 4, i21(gamma, beta, alpha), line, Region.I2
    return RateEvaluation(value, RegimeLabel(Theorem.LOC_ABOVE, case, region), gamma, y)


def rate(theorem: Theorem | str, alpha: float, gamma: float | None = None,
         beta: float | None = None) -> RateEvaluation:
    """Dispatch by theorem name; missing arguments raise DomainError."""
    theorem = Theorem(theorem)
    if theorem is Theorem.UNCONSTRAINED:
        return psi_eval(alpha)
    if gamma is None:
        raise DomainError(f"{theorem.value} requires gamma")
    if theorem is Theorem.TIME:
        return psi1(alpha, gamma)
    if theorem is Theorem.TIME_LATE:
        return psi2(alpha, gamma)
    if beta is None:
        raise DomainError(f"{theorem.value} requires beta")
    if theorem is Theorem.LOC_BELOW:
        return psi3(alpha, gamma, beta)
    return psi4(alpha, gamma, beta)


# --------------------------------------------------------------------------
# per-t costs of a first branching at (lam*t, y*t)


def region_bounds(alpha, lam):
    """Edges (I1|I2, I2|I3) of the child-tail regions, per unit t."""
    s = 1.0 - lam
    return SQRT2 * alpha - SQRT2 * s, SQRT2 * alpha + SQRT2 * RHO * s


def classify(alpha: float, lam: float, y: float) -> Region:
    lower, upper = region_bounds(alpha, lam)
    if y < lower:
        return Region.I1
    if y <= upper:
        return Region.I2
    return Region.I3


def child_tail_exponent(alpha: float, lam: float, y: float) -> tuple[Region, float]:
    """Per-t exponent of one child BBM staying below sqrt(2)*alpha*t from y*t."""
    if not 0.0 <= lam < 1.0:
        raise DomainError(f"child_tail_exponent requires 0 <= lam < 1 (got {lam})")
    region = classify(alpha, lam, y)
    if region is Region.I1:
        return region, 0.0
    if region is Region.I2:
        return region, SQRT2 * RHO * (SQRT2 * (1.0 - alpha) - SQRT2 * lam + y)
    s = 1.0 - lam
    return region, s + (SQRT2 * alpha - y) ** 2 / (2.0 * s)


def child_tail_array(alpha: float, lam, y) -> np.ndarray:
    """Vectorised child_tail_exponent (values only), for 0 <= lam < 1."""
    lam = np.asarray(lam, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 1.0 - lam
    lower, upper = region_bounds(alpha, lam)
    e2 = SQRT2 * RHO * (SQRT2 * (1.0 - alpha) - SQRT2 * lam + y)
    e3 = s + (SQRT2 * alpha - y) ** 2 / (2.0 * s)
    return np.where(y < lower, 0.0, np.where(y <= upper, e2, e3))


def cost_array(alpha: float, lam, y) -> np.ndarray:
    """Vectorised pointwise cost (values only); broadcasting over lam and y."""
    lam = np.asarray(lam, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 1.0 - lam
    lower, upper = region_bounds(alpha, lam)
    c1 = lam + y * y / (2.0 * lam)
    c2 = (-(4.0 * SQRT2 * RHO - 1.0) * lam + 4.0 * RHO * (1.0 - alpha)
          + (y + 2.0 * SQRT2 * RHO * lam) ** 2 / (2.0 * lam))
    with np.errstate(divide="ignore", invalid="ignore"):
        centre = 2.0 * SQRT2 * alpha * lam / (1.0 + lam)
        c3 = (2.0 - lam + 2.0 * alpha * alpha / (1.0 + lam)
              + (y - centre) ** 2 * (1.0 + lam) / (2.0 * lam * s))
    c3 = np.where(np.isnan(c3), np.inf, c3)
    return np.where(y < lower, c1, np.where(y <= upper, c2, c3))


def pointwise_cost(alpha: float, lam: float, y: float) -> tuple[Region, float]:
    """Per-t cost of first branching at time lam*t and place y*t with both
    subtrees ending below sqrt(2)*alpha*t."""
    _check_alpha(alpha)
    if not 0.0 < lam <= 1.0:
        raise DomainError(f"pointwise_cost requires 0 < lam <= 1 (got {lam})")
    return classify(alpha, lam, y), float(cost_array(alpha, lam, y))


# --------------------------------------------------------------------------
# self-checks: algebraic identities between exponents, and branch agreement


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tol: float
    count: int

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def as_dict(self) -> dict:
        return {"name": self.name, "max_error": self.max_error, "tol": self.tol,
                "count": self.count, "pass": self.passed}


def _rel(lhs, rhs) -> float:
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lhs.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return float(np.max(np.abs(lhs - rhs) / scale))


def identity_suite(n: int = 10_000, seed: int = 0, tol: float = 1e-10) -> list[CheckResult]:
    """Exponent identities on n random (alpha, gamma, beta) draws.

    Errors are relative to max(1, |lhs|, |rhs|).
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-3.0, 1.0, n)
    g = 1.0 - rng.uniform(0.0, 1.0, n)  # (0, 1]
    b = rng.uniform(-4.0, 1.0, n)
    r, s2 = RHO, SQRT2
    t1 = -(a + r) / r
    t2 = (1.0 - a) / (2.0 * s2 - 1.0)
    t3 = (1.0 - a) / s2
    low = a < -r
    y_l, y_h = rng.uniform(0.05, 1.0, n), rng.uniform(-3.0, 3.0, n)

    checks = [
        ("I21(g;1) == I11(g;1)", i21(g, 1.0, a), i11(g, 1.0, a)),
        ("I21(g;-rho) == I31(g;-rho)", i21(g, -r, a), i31(g, -r, a)),
        ("I11(g;1) - I22(g) == (9-4sqrt2)/g (g-t2)^2",
         i11(g, 1.0, a) - i22(g, a), (9.0 - 4.0 * s2) / g * (g - t2) ** 2),
        ("I31(g;-rho) - I22(g) == (rho g+alpha+rho)^2/g",
         i31(g, -r, a) - i22(g, a), (r * g + a + r) ** 2 / g),
        ("I21(g;-rho) - I32(g) == (1-g)/(g(1+g)) (rho g+alpha+rho)^2",
         i21(g, -r, a) - i32(g, a), (1.0 - g) / (g * (1.0 + g)) * (r * g + a + r) ** 2),
        ("I22(g) - I21(t1;-rho) closed form",
         (i22(g, a) - i21(t1, -r, a))[low],
         (-(4.0 * s2 * r - 1.0) * g - 4.0 * s2 * (a + r) + (a + r) / r)[low]),
        ("I22(t2) - I21(t3;1) == rho^2 (1-alpha)/(2sqrt2-1)",
         i22(t2, a) - i21(t3, 1.0, a), r * r / (2.0 * s2 - 1.0) * (1.0 - a)),
        ("I31(g;-rho) - I11(g;1) completed square",
         i31(g, -r, a) - i11(g, 1.0, a),
         -((6.0 - 2.0 * s2) / g) * ((g - (2.0 - s2 * a) / (6.0 - 2.0 * s2)) ** 2
                                     - 2.0 * (a + 2.0 * r) ** 2 / (6.0 - 2.0 * s2) ** 2)),
        ("I12(1-alpha) - I11(g;1) completed square",
         i12(1.0 - a) - i11(g, 1.0, a),
         -(2.0 / g) * ((g - 3.0 * (1.0 - a) / 4.0) ** 2 - ((1.0 - a) / 4.0) ** 2)),
        ("I31(1;-rho) - I21(g;1) completed square",
         i31(1.0, -r, a) - i21(g, 1.0, a),
         -(2.0 / g) * ((g - (a * a - 2.0 * a + 3.0) / 4.0) ** 2
                       - ((a * a - 2.0 * a + 3.0) / 4.0) ** 2 + (1.0 - a) ** 2 / 2.0)),
        ("I31(g;-rho) - I21(g;beta) completed square",
         i31(g, -r, a) - i21(g, b, a),
         -((1.0 - g) ** 2 / g) * (b - (2.0 * r * g + a) / (1.0 - g)) ** 2
         + (3.0 - 2.0 * s2) * g + (a + r) ** 2 / g + 2.0 * r * a - 4.0 * r + 2.0),
    ]
    # composition of the full cost from the children's exponent (lam < 1)
    lam = np.minimum(y_l, 0.999)
    base = lam + y_h ** 2 / (2.0 * lam)
    checks.append(("pointwise_cost == lam + y^2/(2 lam) + 2 child_tail",
                   cost_array(a, lam, y_h), base + 2.0 * child_tail_array(a, lam, y_h)))
    return [CheckResult(name, _rel(lhs, rhs), tol, int(np.size(lhs))) for name, lhs, rhs in checks]


def _values(fn, *args):
    return np.array([fn(*xs).value for xs in zip(*args)])


def _across(fn, point, fixed):
    """fn(*fixed, p) one ulp left and one ulp right of each boundary point p."""
    rows = list(zip(*fixed, point))
    lo = [fn(*row[:-1], np.nextafter(row[-1], -np.inf)).value for row in rows]
    hi = [fn(*row[:-1], np.nextafter(row[-1], np.inf)).value for row in rows]
    return np.array(lo), np.array(hi)


def continuity_suite(n: int = 10_000, seed: int = 0, tol: float = 1e-10) -> list[CheckResult]:
    """Adjacent piecewise formulas agree at every internal boundary, and the
    constrained rates reduce to each other where a constraint is vacuous."""
    rng = np.random.default_rng(seed)
    r, s2 = RHO, SQRT2
    out = []

    def add(name, lhs, rhs):
        out.append(CheckResult(name, _rel(lhs, rhs), tol, int(np.size(lhs))))

    add("psi branches at alpha=-rho", 2.0 * r * (1.0 + r), 1.0 + r * r)

    # psi1: boundaries t1, t2, t3 when they fall inside (0, 1)
    a = rng.uniform(-2.0 * r, -r, n)
    t1 = -(a + r) / r
    add("psi1 I32|I22 at t1", i32(t1, a), i22(t1, a))
    lo, hi = _across(psi1, t1, (a,))
    add("psi1 across t1", lo, hi)
    a = rng.uniform(-2.0 * r, 1.0, n)
    t2 = (1.0 - a) / (2.0 * s2 - 1.0)
    add("psi1 I22|I11 at t2", i22(t2, a), i11(t2, 1.0, a))
    lo, hi = _across(psi1, t2, (a,))
    add("psi1 across t2", lo, hi)
    a = rng.uniform(-r, 1.0, n)
    t3 = (1.0 - a) / s2
    add("psi1 I11|flat at t3", i11(t3, 1.0, a), 2.0 * r * (1.0 - a))
    lo, hi = _across(psi1, t3, (a,))
    add("psi1 across t3", lo, hi)

    # psi2: the switch at 1 - alpha and the left-end limit
    a = rng.uniform(0.0, 1.0, n)
    a = a[(1.0 - a) > (1.0 - a) / s2]
    add("psi2 I11|flat at 1-alpha", i11(1.0 - a, 1.0, a), 1.0 - a)
    lo, hi = _across(psi2, 1.0 - a, (a,))
    add("psi2 across 1-alpha", lo, hi)
    a = rng.uniform(-r, 1.0, n)
    add("psi2 limit at t3", i11((1.0 - a) / s2, 1.0, a), 2.0 * r * (1.0 - a))

    # psi3: the switch at beta1 (when beta1 >= 1)
    a = rng.uniform(0.05, 0.95, n)
    g = rng.uniform(1.0 - a, 1.0)
    g = np.minimum(g, np.nextafter(1.0, 0.0))
    b1 = a / (1.0 - g)
    keep = b1 >= 1.0
    a, g, b1 = a[keep], g[keep], b1[keep]
    add("psi3 flat|I11 at beta1", g, i11(g, b1, a))
    lo, hi = _across(psi3, b1, (a, g))
    add("psi3 across beta1", lo, hi)

    # psi4, early window (gamma < t1): switch at alpha/(1+gamma)
    a = rng.uniform(-3.0, -r, n)
    g = rng.uniform(0.0, 1.0, n) * np.minimum(-(a + r) / r, 1.0)
    g = np.maximum(g, 1e-3)
    cs = a / (1.0 + g)
    add("psi4 I31|I32 at alpha/(1+gamma)", i31(g, cs, a), i32(g, a))
    lo, hi = _across(psi4, cs, (a, g))
    add("psi4 across alpha/(1+gamma)", lo, hi)
    # psi4, late window: switches at -rho and beta2
    a = rng.uniform(-2.0 * r, 1.0, n)
    t1c = np.maximum(-(a + r) / r, 0.0)
    g = rng.uniform(t1c, 1.0)
    g = np.clip(g, 1e-3, np.nextafter(1.0, 0.0))
    add("psi4 I31|I21 at -rho", i31(g, -r, a), i21(g, -r, a))
    lo, hi = _across(psi4, np.full(g.size, -r), (a, g))
    add("psi4 across -rho", lo, hi)
    b2 = (a + 2.0 * r * g) / (1.0 - g)
    keep = (b2 > -r) & (b2 < 1.0)
    add("psi4 I21|I22 at beta2", i21(g[keep], b2[keep], a[keep]), i22(g[keep], a[keep]))
    lo, hi = _across(psi4, b2[keep], (a[keep], g[keep]))
    add("psi4 across beta2", lo, hi)
    # psi4 across gamma = t1 at fixed beta
    a = rng.uniform(-2.0 * r, -r, n)
    t1 = -(a + r) / r
    b = rng.uniform(-3.0, 1.0, n)
    lo = np.array([psi4(ai, np.nextafter(ti, 0.0), bi).value for ai, ti, bi in zip(a, t1, b)])
    hi = np.array([psi4(ai, ti, bi).value for ai, ti, bi in zip(a, t1, b)])
    add("psi4 across gamma=t1", lo, hi)

    # reductions
    a = rng.uniform(-3.0, 1.0, n)
    add("psi1(alpha, 1) == psi(alpha)", _values(psi1, a, np.ones(n)), [psi(x) for x in a])
    g = 1.0 - rng.uniform(0.0, 1.0, n)
    add("psi3(alpha, gamma, 1) == vacuous value", _values(psi3, a, g, np.ones(n)),
        np.where(g < 1.0 - a, g + (a - (1.0 - g)) ** 2 / g, g))
    add("psi4(alpha, gamma, 1) == psi1(alpha, gamma)",
        _values(psi4, a, g, np.ones(n)), _values(psi1, a, g))
    a2 = rng.uniform(-r, 1.0, n)
    g2 = rng.uniform((1.0 - a2) / s2, 1.0)
    keep = (g2 > (1.0 - a2) / s2) & (a2 > -r)
    a2, g2 = a2[keep], g2[keep]
    add("psi2 == psi3(beta=1)", _values(psi2, a2, g2), _values(psi3, a2, g2, np.ones(a2.size)))
    return out
