"""Log-domain solver for the law of the BBM maximum.

F(t, x) = P(max position at time t <= x) solves

    F_t = 1/2 F_xx + F^2 - F,    F(0, x) = 1{x >= 0}.

The solver stores g = ln F, since the interesting values of F are far below
double precision resolution of 1 - F.  Each time step is split into an exact
reaction step and an explicit heat step; both are written directly in terms
of g so no step ever forms F in the deep left tail.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr

from .rates import SQRT2, DomainError

LEFT_FLOOR = -1e6  # stands in for ln 0 in the initial step function


class FkppError(RuntimeError):
    pass


@dataclass(frozen=True)
class FkppConfig:
    x_min: float
    x_max: float
    dx: float
    dt: float
    t_end: float
    snapshot_stride: int

    def __post_init__(self):
        if not self.x_min < 0.0 < self.x_max:
            raise DomainError("need x_min < 0 < x_max")
        if not self.dx > 0.0 or not self.dt > 0.0:
            raise DomainError("dx and dt must be positive")
        if self.dt > 0.5 * self.dx ** 2 * (1.0 + 1e-12):
            raise DomainError(f"dt={self.dt} exceeds dx^2/2={0.5 * self.dx ** 2}")
        if not self.t_end > 0.0:
            raise DomainError("t_end must be positive")
        if self.snapshot_stride < 1:
            raise DomainError("snapshot_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @classmethod
    def default(cls, t_end: float, alpha_min: float = 0.0, dx: float = 0.05,
                max_snapshots: int = 500) -> "FkppConfig":
        """Grid wide enough to query sqrt2*alpha*t for alpha >= alpha_min, t <= t_end."""
        spread = 12.0 * math.sqrt(t_end)
        # grid nodes on multiples of dx, so x = 0 is a node
        x_min = math.floor((min(SQRT2 * alpha_min * t_end, 0.0) - spread) / dx) * dx
        x_max = math.ceil((SQRT2 * t_end + spread) / dx) * dx
        n_steps = int(math.ceil(t_end / (0.25 * dx * dx)))
        dt = t_end / n_steps
        stride = max(1, int(math.ceil(n_steps / max_snapshots)))
        return cls(x_min, x_max, dx, dt, t_end, stride)

    @classmethod
    def from_file(cls, path: str | Path) -> "FkppConfig":
        """Read a plain ``key = value`` file (``#`` starts a comment)."""
        values = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(values) - set(names)
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: (int(v) if k == "snapshot_stride" else float(v)) for k, v in values.items()}
        return cls(**kwargs)


@dataclass
class FkppSolution:
    times: np.ndarray  # (n_snap,)
    x: np.ndarray  # (n_x,)
    log_f: np.ndarray  # (n_snap, n_x)
    config: FkppConfig

    def save_npz(self, path: str | Path) -> None:
        np.savez_compressed(path, times=self.times, x=self.x, log_f=self.log_f,
                            **{f"cfg_{k}": v for k, v in asdict(self.config).items()})

    @classmethod
    def load_npz(cls, path: str | Path) -> "FkppSolution":
        with np.load(path) as d:
            cfg = FkppConfig(**{f.name: d[f"cfg_{f.name}"].item() for f in fields(FkppConfig)})
            return cls(d["times"], d["x"], d["log_f"], cfg)

    def save_csv(self, path: str | Path, x_stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "ln_F"])
            for k, t in enumerate(self.times):
                for i in range(0, self.x.size, x_stride):
                    w.writerow([f"{t:.10g}", f"{self.x[i]:.10g}", f"{self.log_f[k, i]:.17g}"])


def _reaction(g: np.ndarray, dt: float) -> np.ndarray:
    # exact logistic solution F <- F / (F + (1 - F) e^dt), in log form
    return g - dt - np.log1p(np.exp(g) * np.expm1(-dt))


def _diffusion(g: np.ndarray, r: float) -> np.ndarray:
    # log of the explicit step F_i + r (F_{i+1} - 2 F_i + F_{i-1}); all three
    # weights are positive for r <= 1/2 so the log-sum-exp is well defined
    out = g.copy()
    centre = math.log1p(-2.0 * r) + g[1:-1]
    side = np.logaddexp(g[2:], g[:-2]) + math.log(r)
    out[1:-1] = np.logaddexp(centre, side)
    out[0] = 2.0 * out[1] - out[2]
    out[-1] = 0.0
    return out


def solve(cfg: FkppConfig, tol: float = 1e-9) -> FkppSolution:
    """Evolve ln F on the configured grid; snapshots every snapshot_stride steps."""
    n_x = int(round((cfg.x_max - cfg.x_min) / cfg.dx)) + 1
    x = cfg.x_min + cfg.dx * np.arange(n_x)
    # cell average of the step function, so the jump sits at x = 0 to second order
    frac = np.clip(x / cfg.dx + 0.5, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        g = np.maximum(np.log(frac), LEFT_FLOOR)
    r = 0.5 * cfg.dt / cfg.dx ** 2
    n_steps = cfg.n_steps
    times = [0.0]
    snaps = [g.copy()]
    for step in range(1, n_steps + 1):
        g = _diffusion(_reaction(g, cfg.dt), r)
        top = g.max()
        if top > 0.0:
            if top > tol:
                raise FkppError(f"ln F exceeds 0 by {top:.3g} at step {step} "
                                f"(t={step * cfg.dt:.6g})")
            # rounding in the log-sum-exp near F = 1; the exact step keeps F <= 1
            np.minimum(g, 0.0, out=g)
        if step % cfg.snapshot_stride == 0 or step == n_steps:
            if not np.all(np.isfinite(g)):
                raise FkppError(f"non-finite ln F at step {step} (t={step * cfg.dt:.6g})")
            times.append(step * cfg.dt)
            snaps.append(g.copy())
    return FkppSolution(np.array(times), x, np.vstack(snaps), cfg)


def query(sol: FkppSolution, t: float, x: float) -> float:
    """Bilinear interpolation of ln F(t, x); no extrapolation."""
    times, xs = sol.times, sol.x
    if not times[0] <= t <= times[-1] * (1.0 + 1e-12):
        raise DomainError(f"t={t} outside solved range [0, {times[-1]}]")
    if not xs[0] <= x <= xs[-1]:
        raise DomainError(f"x={x} outside grid [{xs[0]}, {xs[-1]}]")
    k = min(int(np.searchsorted(times, t, side="right")) - 1, times.size - 2)
    i = min(int(np.searchsorted(xs, x, side="right")) - 1, xs.size - 2)
    k = max(k, 0)
    i = max(i, 0)
    wt = min(max((t - times[k]) / (times[k + 1] - times[k]), 0.0), 1.0)
    wx = min(max((x - xs[i]) / (xs[i + 1] - xs[i]), 0.0), 1.0)
    g = sol.log_f
    lower = (1.0 - wx) * g[k, i] + wx * g[k, i + 1]
    upper = (1.0 - wx) * g[k + 1, i] + wx * g[k + 1, i + 1]
    return float((1.0 - wt) * lower + wt * upper)


@dataclass
class SlopeFit:
    psi_hat: float
    c: float
    d: float
    residuals: np.ndarray
    t_list: np.ndarray
    minus_log: np.ndarray

    def as_dict(self) -> dict:
        return {"psi_hat": self.psi_hat, "c": self.c, "d": self.d,
                "max_abs_residual": float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0,
                "t": self.t_list.tolist(), "minus_ln_p": self.minus_log.tolist()}


def fit_slope(t_list: Sequence[float], minus_log: Sequence[float], min_points: int = 3) -> SlopeFit:
    """Least squares for -ln P = psi*t + c*ln t + d."""
    t = np.asarray(t_list, dtype=float)
    y = np.asarray(minus_log, dtype=float)
    if t.size != y.size:
        raise DomainError("t_list and values differ in length")
    if t.size < min_points:
        raise DomainError(f"need at least {min_points} points (got {t.size})")
    if np.unique(t).size != t.size:
        raise DomainError("duplicate t values make the fit singular")
    if np.any(t <= 0.0):
        raise DomainError("t values must be positive")
    design = np.column_stack([t, np.log(t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return SlopeFit(float(coef[0]), float(coef[1]), float(coef[2]), y - design @ coef, t, y)


def slope_estimate(alpha: float, t_list: Sequence[float], cfg: FkppConfig | None = None,
                   sol: FkppSolution | None = None) -> SlopeFit:
    """Fit the decay rate of P(max <= sqrt2*alpha*t) from the solved front."""
    t_list = sorted(float(t) for t in t_list)
    if len(t_list) < 4:
        raise DomainError("slope_estimate needs at least 4 times")
    if sol is None:
        sol = solve(cfg if cfg is not None else FkppConfig.default(max(t_list), min(alpha, 0.0)))
    minus_log = [-query(sol, t, SQRT2 * alpha * t) for t in t_list]
    return fit_slope(t_list, minus_log, min_points=4)


@dataclass
class BoundsReport:
    lower_violation: float  # max of (log lower bound - ln F), should be <= 0
    upper_violation: float  # max of (ln(1-F) - log upper bound), should be <= 0
    max_log_f: float
    min_increment: float  # most negative g[i+1] - g[i] over snapshots
    ok: bool


def check_bounds(sol: FkppSolution, t_min: float = 1.0, floor: float = -200.0,
                 slack: float = 1e-6) -> BoundsReport:
    """No-branching lower bound and first-moment upper bound on every snapshot.

    Points where a bound sits below ``exp(floor)`` are skipped; there the
    lattice tail of the discrete heat kernel is not a faithful Gaussian tail.
    Snapshots before ``t_min`` are skipped as well: the half-cell smearing of
    the initial step shifts early Gaussian tails by more than the bounds allow.
    """
    lower_v = -np.inf
    upper_v = -np.inf
    for t, g in zip(sol.times, sol.log_f):
        if t <= 0.0 or t < t_min:
            continue
        z = sol.x / math.sqrt(t)
        lower = -t + log_ndtr(z)
        mask = lower > floor
        if mask.any():
            lower_v = max(lower_v, float(np.max(lower[mask] - g[mask])))
        log_upper = t + log_ndtr(-z)
        # ln(1 - F) is only resolved where 1 - F is well above rounding of g
        with np.errstate(divide="ignore", invalid="ignore"):
            log_tail = np.log(-np.expm1(g))
        mask = (log_upper > floor) & (g < -1e-8) & (log_upper < 0.0)
        if mask.any():
            upper_v = max(upper_v, float(np.max(log_tail[mask] - log_upper[mask])))
    min_inc = float(np.min(np.diff(sol.log_f, axis=1)))
    max_g = float(sol.log_f.max())
    ok = lower_v <= slack and upper_v <= slack and max_g <= slack and min_inc >= -slack
    return BoundsReport(lower_v, upper_v, max_g, min_inc, bool(ok))
