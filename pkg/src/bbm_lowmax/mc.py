"""Direct simulation of binary branching Brownian motion.

Particles branch at rate one into two and move as independent standard
Brownian motions.  Whole blocks of replicas are simulated together, one
generation at a time: every particle alive in a generation draws a lifetime
and a Gaussian increment, and those that die before the horizon leave two
children for the next generation.  No path is pruned, so the maximum at the
horizon is exact.

Each block draws from its own Philox stream keyed by (seed, block index), so
a run is reproducible bit for bit and does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .rates import SQRT2, DomainError

DEFAULT_BLOCK = 1 << 14
MAX_T = 12.0


class PopulationCapError(RuntimeError):
    pass


class TooFewHitsError(RuntimeError):
    pass


@dataclass(frozen=True)
class McConfig:
    t: float
    alpha: float  # math.inf means no conditioning
    replicas: int
    seed: int = 0
    population_cap: int = 1_000_000
    block_size: int = DEFAULT_BLOCK
    max_t: float = MAX_T

    def __post_init__(self):
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        if not self.t > 0.0:
            raise DomainError("t must be positive")
        if self.t > self.max_t:
            raise DomainError(f"t={self.t} exceeds the compute guard max_t={self.max_t}")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must fit in 64 bits")

    @property
    def level(self) -> float:
        return math.inf if math.isinf(self.alpha) else SQRT2 * self.alpha * self.t


@dataclass(frozen=True)
class Realization:
    max_position: float
    first_branch_time: float | None
    first_branch_location: float | None
    final_population: int


@dataclass
class BlockResult:
    max_position: np.ndarray
    first_tau: np.ndarray  # NaN when no branching before t
    first_y: np.ndarray
    population: np.ndarray


@dataclass
class McEstimate:
    p_hat: float
    std_err: float
    hits: int
    replicas: int
    cond_tau_samples: np.ndarray = field(repr=False)
    cond_y_samples: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {"p_hat": self.p_hat, "std_err": self.std_err, "hits": self.hits,
                "replicas": self.replicas, "hits_with_branch": int(self.cond_tau_samples.size),
                "mean_tau_over_t": _mean(self.cond_tau_samples),
                "mean_y_over_t": _mean(self.cond_y_samples)}


def _mean(a: np.ndarray):
    return float(a.mean()) if a.size else None


def _generator(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=(seed << 64) | index, counter=counter))


def simulate_block(t: float, n: int, rng: np.random.Generator,
                   population_cap: int = 1_000_000) -> BlockResult:
    """Simulate n independent trees up to time t."""
    best = np.full(n, -np.inf)
    first_tau = np.full(n, np.nan)
    first_y = np.full(n, np.nan)
    population = np.zeros(n, dtype=np.int64)

    rep = np.arange(n)
    birth = np.zeros(n)
    pos = np.zeros(n)
    root = True
    while rep.size:
        life = rng.exponential(size=rep.size)
        z = rng.standard_normal(size=rep.size)
        death = birth + life
        alive = death >= t
        span = np.where(alive, t - birth, life)
        end = pos + np.sqrt(span) * z

        if alive.any():
            np.maximum.at(best, rep[alive], end[alive])
            population += np.bincount(rep[alive], minlength=n)
        split = ~alive
        if root:
            first_tau[split] = death[split]
            first_y[split] = end[split]
            root = False
        rep = np.repeat(rep[split], 2)
        birth = np.repeat(death[split], 2)
        pos = np.repeat(end[split], 2)
        if rep.size and np.bincount(rep).max() + population.max() > population_cap:
            raise PopulationCapError(f"population_cap={population_cap} exceeded before t={t}")
    return BlockResult(best, first_tau, first_y, population)


def simulate(t: float, seed: int, replica: int = 0,
             population_cap: int = 1_000_000) -> Realization:
    """One exact realization, keyed by (seed, replica)."""
    if not t > 0.0:
        raise DomainError("t must be positive")
    res = simulate_block(t, 1, _generator(seed, replica, stream=1), population_cap)
    tau = res.first_tau[0]
    return Realization(float(res.max_position[0]),
                       None if np.isnan(tau) else float(tau),
                       None if np.isnan(tau) else float(res.first_y[0]),
                       int(res.population[0]))


def _run_block(args) -> BlockResult:
    t, n, seed, index, cap = args
    return simulate_block(t, n, _generator(seed, index), cap)


def run_blocks(cfg: McConfig, workers: int = 1) -> BlockResult:
    """All replicas of cfg, concatenated in replica order."""
    sizes = [cfg.block_size] * (cfg.replicas // cfg.block_size)
    if cfg.replicas % cfg.block_size:
        sizes.append(cfg.replicas % cfg.block_size)
    jobs = [(cfg.t, n, cfg.seed, i, cfg.population_cap) for i, n in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block, jobs))
    else:
        parts = [_run_block(j) for j in jobs]
    return BlockResult(*(np.concatenate([getattr(p, f) for p in parts])
                         for f in ("max_position", "first_tau", "first_y", "population")))


def estimate_prob(cfg: McConfig, workers: int = 1, result: BlockResult | None = None) -> McEstimate:
    """Estimate P(max at time t <= sqrt2*alpha*t), with first-branch samples of the hits."""
    res = result if result is not None else run_blocks(cfg, workers)
    hit = res.max_position <= cfg.level
    hits = int(hit.sum())
    p = hits / cfg.replicas
    se = math.sqrt(p * (1.0 - p) / cfg.replicas)
    branched = hit & ~np.isnan(res.first_tau)
    return McEstimate(p, se, hits, cfg.replicas,
                      res.first_tau[branched] / cfg.t, res.first_y[branched] / cfg.t)


def unconditional_tau_mean(t: float) -> float:
    """E[min(tau, t)] / t for tau ~ Exp(1)."""
    return -math.expm1(-t) / t


@dataclass
class FirstBranchSummary:
    hits_with_branch: int
    mean_tau_over_t: float
    mean_y_over_t: float
    tau_hist: np.ndarray
    tau_edges: np.ndarray
    y_hist: np.ndarray
    y_edges: np.ndarray
    unconditional_tau_mean: float

    def as_dict(self) -> dict:
        return {"hits_with_branch": self.hits_with_branch,
                "mean_tau_over_t": self.mean_tau_over_t,
                "mean_y_over_t": self.mean_y_over_t,
                "unconditional_mean_tau_over_t": self.unconditional_tau_mean,
                "tau_hist": self.tau_hist.tolist(), "tau_edges": self.tau_edges.tolist(),
                "y_hist": self.y_hist.tolist(), "y_edges": self.y_edges.tolist()}


def conditional_first_branch(cfg: McConfig, bins: int = 20, min_hits: int = 100,
                             workers: int = 1, estimate: McEstimate | None = None
                             ) -> FirstBranchSummary:
    est = estimate if estimate is not None else estimate_prob(cfg, workers)
    taus, ys = est.cond_tau_samples, est.cond_y_samples
    if taus.size < min_hits:
        raise TooFewHitsError(f"only {taus.size} hits with a first branch (need {min_hits}); "
                              "raise replicas or alpha")
    th, te = np.histogram(taus, bins=bins, range=(0.0, 1.0))
    yh, ye = np.histogram(ys, bins=bins)
    return FirstBranchSummary(int(taus.size), float(taus.mean()), float(ys.mean()),
                              th, te, yh, ye, unconditional_tau_mean(cfg.t))


def tau_histogram_pvalue(tau_over_t: np.ndarray, t: float, bins: int = 20) -> float:
    """Chi-square p-value of branched tau/t against Exp(1) truncated at t."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(tau_over_t, bins=edges)
    cdf = -np.expm1(-edges * t) / -math.expm1(-t)
    expected = np.diff(cdf) * counts.sum()
    return float(stats.chisquare(counts, expected).pvalue)


@dataclass
class PopulationReport:
    t: float
    replicas: int
    mean: float
    variance: float
    expected_mean: float
    expected_variance: float
    z_mean: float
    z_variance: float
    flagged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sanity_population(t: float, replicas: int, seed: int = 0, sigmas: float = 4.0) -> PopulationReport:
    """Sample mean/variance of n(t) against the Yule moments."""
    if t > 10.0:
        raise DomainError("sanity_population is limited to t <= 10")
    cfg = McConfig(t, math.inf, replicas, seed)
    pop = run_blocks(cfg).population.astype(float)
    m, v = float(pop.mean()), float(pop.var(ddof=1))
    # n(t) is geometric on {1, 2, ...} with success probability e^{-t}
    law = stats.geom(math.exp(-t))
    mu, var, _, kurt = (float(x) for x in law.stats(moments="mvsk"))
    n = replicas
    z_m = (m - mu) / math.sqrt(var / n)
    mu4 = (kurt + 3.0) * var ** 2
    var_of_var = (mu4 - var ** 2 * (n - 3) / (n - 1)) / n
    z_v = (v - var) / math.sqrt(var_of_var)
    return PopulationReport(t, replicas, m, v, mu, var, z_m, z_v,
                            bool(abs(z_m) > sigmas or abs(z_v) > sigmas))


def export_csv(est: McEstimate, cfg: McConfig, res: BlockResult, path: str | Path) -> None:
    """One row per replica: (replica, hit, tau_over_t, y_over_t)."""
    hit = res.max_position <= cfg.level
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replica", "hit", "tau_over_t", "y_over_t"])
        for i in range(cfg.replicas):
            tau = res.first_tau[i]
            w.writerow([i, int(hit[i]),
                        "" if np.isnan(tau) else f"{tau / cfg.t:.12g}",
                        "" if np.isnan(tau) else f"{res.first_y[i] / cfg.t:.12g}"])


def export_json(est: McEstimate, path: str | Path) -> None:
    Path(path).write_text(json.dumps(est.summary(), indent=2))
