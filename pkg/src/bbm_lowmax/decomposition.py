"""Constrained low-maximum probabilities via the first branching event.

Conditioning on the first branching time tau and place y, the two subtrees
are independent copies started at y, so

    P(max <= x0, tau in A, y in B)
        = int_A e^{-tau} int_B phi_tau(y) F(t - tau, x0 - y)^2 dy dtau

with x0 = sqrt2*alpha*t.  EXACT mode takes F from an FKPP solution.
ASYMPTOTIC mode replaces F^2 by exp(-2 t e(tau/t, y/t)) with e the per-t
child tail exponent, region by region.  Everything is accumulated in logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, logsumexp

from . import rates
from .fkpp import FkppSolution, SlopeFit, fit_slope
from .rates import SQRT2, RHO, DomainError, Region
from .variational import ConstraintSpec, Location

GL_ORDER = 8
DROP = 50.0  # log-units below the peak that are ignored
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


class Mode(str, Enum):
    EXACT = "exact"
    ASYMPTOTIC = "asymptotic"


class QuadratureError(RuntimeError):
    pass


class CoverageError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecompositionQuery:
    alpha: float
    t: float
    spec: ConstraintSpec
    mode: Mode = Mode.EXACT
    regions: frozenset = frozenset({Region.I1, Region.I2, Region.I3})

    def __post_init__(self):
        if not self.t > 0.0:
            raise DomainError("t must be positive")
        if not self.alpha < 1.0:
            raise DomainError("alpha must be < 1")


@dataclass
class DecompositionEstimate:
    ln_prob: float
    minus_log_over_t: float
    quadrature_error: float
    components: dict = field(default_factory=dict)  # per-region ln P (ASYMPTOTIC)
    panels: int = 0

    @property
    def probability(self) -> float:
        return math.exp(self.ln_prob)


# --------------------------------------------------------------------------
# child terms


def _child_exact(sol: FkppSolution, s: float, x: np.ndarray) -> np.ndarray:
    """2 ln F(s, x), NaN left of the grid, 0 right of it."""
    times = sol.times
    if s > times[-1] * (1.0 + 1e-12):
        raise CoverageError(f"solution ends at t={times[-1]}, need {s}")
    k = min(max(int(np.searchsorted(times, s, side="right")) - 1, 0), times.size - 2)
    w = min(max((s - times[k]) / (times[k + 1] - times[k]), 0.0), 1.0)
    row = (1.0 - w) * sol.log_f[k] + w * sol.log_f[k + 1]
    return 2.0 * np.interp(x, sol.x, row, left=np.nan, right=0.0)


def _log_simpson(h: np.ndarray, step: float) -> float:
    """ln of the composite Simpson sum of exp(h); h has an odd length."""
    if h.size < 3:
        return -math.inf
    w = np.full(h.size, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return float(logsumexp(h + np.log(w * step / 3.0)))


class _Integrand:
    """ln of the inner y-integral at a given tau, for one query."""

    def __init__(self, q: DecompositionQuery, sol: FkppSolution | None, level: int):
        self.q = q
        self.sol = sol
        self.level = level
        self.x0 = SQRT2 * q.alpha * q.t

    def child(self, tau: float, y: np.ndarray) -> np.ndarray:
        q = self.q
        if q.mode is Mode.EXACT:
            return _child_exact(self.sol, q.t - tau, self.x0 - y)
        lam = tau / q.t
        return -2.0 * q.t * rates.child_tail_array(q.alpha, lam, y / q.t)

    def pieces(self, tau: float) -> list[tuple[Region | None, float, float]]:
        """y-intervals to integrate, with the region each one represents."""
        q = self.q
        lo, hi = self.feasible(tau)
        if q.mode is Mode.EXACT:
            return [(None, lo, hi)]
        a, b = rates.region_bounds(q.alpha, tau / q.t)
        out = []
        for region, r_lo, r_hi in ((Region.I1, -math.inf, a * q.t), (Region.I2, a * q.t, b * q.t),
                                   (Region.I3, b * q.t, math.inf)):
            if region in q.regions:
                p_lo, p_hi = max(lo, r_lo), min(hi, r_hi)
                if p_lo < p_hi:
                    out.append((region, p_lo, p_hi))
        return out

    def _step(self, tau: float) -> float:
        # resolve the Gaussian in y and the children's front, whose width
        # scales like sqrt(t - tau)
        step = min(math.sqrt(tau) / 8.0, math.sqrt(self.q.t - tau) / 8.0)
        if self.q.mode is Mode.EXACT:
            step = min(step, 0.5 * self.sol.config.dx)
        return step / 2 ** self.level

    def feasible(self, tau: float) -> tuple[float, float]:
        spec = self.q.spec
        if spec.location is Location.UNCONSTRAINED:
            return -math.inf, math.inf
        line = self.x0 - SQRT2 * spec.beta * (self.q.t - tau)
        if spec.location is Location.BELOW:
            return -math.inf, line
        return line, math.inf

    def log_inner(self, tau: float) -> dict:
        """ln of int phi_tau(y) * children dy over each piece."""
        # the integrand is at most the bare Gaussian, so anything where the
        # Gaussian drops DROP below the integrand at a reference point is ignored
        y_ref = min(max(0.0, self.feasible(tau)[0]), self.feasible(tau)[1])
        h_ref, _ = self._eval(tau, np.array([y_ref]))
        h_ref = float(h_ref[0])
        if not math.isfinite(h_ref):
            raise CoverageError(f"tau={tau:.6g}: reference point y={y_ref:.6g} not covered")
        radius = math.sqrt(2.0 * tau * max(DROP - h_ref - 0.5 * math.log(2.0 * math.pi * tau), 0.0))
        step = self._step(tau)
        out = {}
        for region, p_lo, p_hi in self.pieces(tau):
            y_lo = max(p_lo, -radius)
            y_hi = min(p_hi, radius)
            if not y_lo < y_hi:
                out[region] = -math.inf
                continue
            out[region] = self._piece(tau, y_lo, y_hi, step)
        return out

    def _eval(self, tau, y):
        h = -y * y / (2.0 * tau) - 0.5 * math.log(2.0 * math.pi * tau) + self.child(tau, y)
        uncovered = np.isnan(h)
        if uncovered.any():
            # left of the FKPP grid: only harmless if even the bare Gaussian is negligible
            bound = -y[uncovered] ** 2 / (2.0 * tau) - 0.5 * math.log(2.0 * math.pi * tau)
            h = np.where(uncovered, -np.inf, h)
            return h, float(bound.max())
        return h, -math.inf

    def _piece(self, tau, y_lo, y_hi, step):
        n = 2 * int(min(max(math.ceil(0.5 * (y_hi - y_lo) / step), 32), 200_000)) + 1
        y = np.linspace(y_lo, y_hi, n)
        h, uncovered = self._eval(tau, y)
        peak = h.max()
        if not math.isfinite(peak):
            if uncovered > -math.inf:
                raise CoverageError(f"tau={tau:.6g}: integrand lies entirely left of the FKPP grid")
            return -math.inf
        if uncovered > peak - DROP:
            raise CoverageError(f"tau={tau:.6g}: FKPP grid too narrow on the left "
                                f"(uncovered mass up to e^{uncovered - peak:.1f} of the peak)")
        keep = np.nonzero(h > peak - DROP)[0]
        i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, n - 1)
        if i1 - i0 < n - 1:
            y = np.linspace(y[i0], y[i1], n)
            h, _ = self._eval(tau, y)
        return _log_simpson(h, (y[-1] - y[0]) / (n - 1))


def _tau_breaks(q: DecompositionQuery) -> list[float]:
    lo, hi = q.spec.tau_window
    t = q.t
    a = q.alpha
    marks = [-(a + RHO) / RHO, (1.0 - a) / (2.0 * SQRT2 - 1.0), (1.0 - a) / SQRT2, 1.0 - a]
    pts = {lo * t, hi * t}
    pts.update(m * t for m in marks if lo < m < hi)
    return sorted(pts)


def _tau_nodes(q: DecompositionQuery, level: int, panel_len: float):
    breaks = _tau_breaks(q)
    nodes, logw = [], []
    h = panel_len / 2 ** level
    for a, b in zip(breaks, breaks[1:]):
        if b <= a:
            continue
        n = max(1, int(math.ceil((b - a) / h)))
        edges = np.linspace(a, b, n + 1)
        for e0, e1 in zip(edges, edges[1:]):
            half = 0.5 * (e1 - e0)
            nodes.extend(e0 + half * (_GL_X + 1.0))
            logw.extend(np.log(half * _GL_W))
    return np.array(nodes), np.array(logw)


def _no_branch_term(q: DecompositionQuery) -> float:
    """ln P(no branching by t, single path ends below x0), when admissible."""
    lo, hi = q.spec.tau_window
    if hi < 1.0 or q.spec.location is Location.ABOVE:
        return -math.inf
    return -q.t + float(log_ndtr(SQRT2 * q.alpha * q.t / math.sqrt(q.t)))


def _single_pass(q, sol, level, panel_len):
    nodes, logw = _tau_nodes(q, level, panel_len)
    if nodes.size == 0:
        # degenerate window [gamma, gamma]: zero measure in tau
        return -math.inf, {}, 0
    integ = _Integrand(q, sol, level)
    per_region: dict = {}
    for tau, lw in zip(nodes, logw):
        for region, val in integ.log_inner(float(tau)).items():
            per_region.setdefault(region, []).append(val - tau + lw)
    comps = {r: float(logsumexp(v)) for r, v in per_region.items()}
    total = float(logsumexp(list(comps.values()))) if comps else -math.inf
    if q.mode is Mode.EXACT:
        total = float(np.logaddexp(total, _no_branch_term(q)))
    return total, comps, nodes.size // GL_ORDER


def _estimate(q, sol, tol, max_level, panel_len):
    prev, _, _ = _single_pass(q, sol, 0, panel_len)
    history = [prev]
    for level in range(1, max_level + 1):
        cur, comps, panels = _single_pass(q, sol, level, panel_len)
        history.append(cur)
        err = abs(cur - prev)
        if err <= tol or (cur == prev == -math.inf):
            err = 0.0 if not math.isfinite(err) else err
            return DecompositionEstimate(cur, -cur / q.t, err,
                                         {r.value if r else "all": v for r, v in comps.items()}, panels)
        prev = cur
    raise QuadratureError(f"ln P did not settle to {tol} after {max_level} refinements: "
                          + ", ".join(f"{v:.8g}" for v in history))


def constrained_prob_exact(q: DecompositionQuery, sol: FkppSolution, tol: float = 1e-4,
                           max_level: int = 4, panel_len: float = 1.0) -> DecompositionEstimate:
    """ln P of the constrained event with exact children laws from ``sol``."""
    if q.mode is not Mode.EXACT:
        raise DomainError("constrained_prob_exact needs mode EXACT")
    if q.t > sol.times[-1] * (1.0 + 1e-12):
        raise CoverageError(f"solution covers t <= {sol.times[-1]}, query has t={q.t}")
    return _estimate(q, sol, tol, max_level, panel_len)


def constrained_prob_asymptotic(q: DecompositionQuery, tol: float = 1e-4,
                                max_level: int = 4, panel_len: float | None = None
                                ) -> DecompositionEstimate:
    """ln of the region-wise asymptotic version of the same integral.

    ``components`` holds the ln of each region's share; the result is a
    diagnostic quantity, not a probability.
    """
    if q.mode is not Mode.ASYMPTOTIC:
        raise DomainError("constrained_prob_asymptotic needs mode ASYMPTOTIC")
    if panel_len is None:
        panel_len = max(1.0, q.t / 200.0)
    return _estimate(q, None, tol, max_level, panel_len)


def constrained_prob(q: DecompositionQuery, sol: FkppSolution | None = None, **kw) -> DecompositionEstimate:
    if q.mode is Mode.EXACT:
        if sol is None:
            raise DomainError("EXACT mode needs an FKPP solution")
        return constrained_prob_exact(q, sol, **kw)
    return constrained_prob_asymptotic(q, **kw)


def slope_fit(t_list: Sequence[float], ln_probs: Sequence[float]) -> SlopeFit:
    """Fit -ln P = psi*t + c*ln t + d; at least three distinct t."""
    t = np.asarray(t_list, dtype=float)
    if np.any(np.diff(t) <= 0.0) and np.unique(t).size == t.size:
        raise DomainError("t_list must be increasing")
    return fit_slope(t, -np.asarray(ln_probs, dtype=float), min_points=3)
