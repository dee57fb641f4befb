"""Command-line entry point.

Exit codes: 0 success, 1 failed verification or numerical failure,
2 usage or domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import decomposition, fkpp, mc, rates, variational
from .rates import RHO, SQRT2, DomainError, Theorem

OUTPUT_DIR_ENV = "BBM_LOWMAX_OUTPUT_DIR"
SWEEP_FIELDS = ["param", "value", "theorem", "case", "region", "tau_over_t", "y_over_t", "breakpoint"]
DECOMP_FIELDS = ["alpha", "gamma", "beta", "t", "mode", "ln_prob", "minus_log_over_t"]


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# parsing helpers


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included when hit) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid must be start:stop:step (got {text!r})")
        start, stop, step = (float(p) for p in parts)
        if step <= 0.0:
            raise UsageError("grid step must be positive")
        if stop < start:
            return []
        n = int(math.floor((stop - start) / step + 1e-9))
        pts = [start + k * step for k in range(n + 1)]
        # round away accumulated drift so grid points print cleanly
        return [round(p, 12) for p in pts]
    return [float(p) for p in text.split(",") if p.strip()]


def is_grid(text: str | None) -> bool:
    return text is not None and (":" in text or "," in text)


def parse_alpha(text: str) -> float:
    if text.strip().lower() in {"inf", "+inf", "infinity"}:
        return math.inf
    return float(text)


def resolve_output(path: str | None, force: bool) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    if p.exists() and not force:
        raise UsageError(f"{p} exists; pass --force to overwrite")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def emit_json(obj) -> None:
    print(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


# --------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    ev = rates.rate(args.theorem, args.alpha, args.gamma, args.beta)
    emit_json(ev.as_dict())
    return 0


# --------------------------------------------------------------------------
# sweep


def breakpoints(theorem: Theorem, alpha: float, axis: str, gamma: float | None,
                beta: float | None) -> list[tuple[str, float]]:
    """Regime boundaries of a one-parameter slice, as (label, location)."""
    out: list[tuple[str, float]] = []
    if axis == "gamma":
        th = rates.thresholds(alpha, 1.0)
        if theorem is Theorem.TIME:
            out = [("t1", th.t1), ("t2", th.t2), ("t3", th.t3)]
        elif theorem is Theorem.TIME_LATE:
            out = [("1-alpha", 1.0 - alpha)]
        elif theorem is Theorem.LOC_BELOW and beta > 0.0:
            out = [("beta1=beta", 1.0 - alpha / beta)]
        elif theorem is Theorem.LOC_ABOVE:
            out = [("t1", th.t1)]
            if beta != 0.0:
                cross = alpha / beta - 1.0
                if cross < min(th.t1, 1.0):
                    out.append(("alpha/(1+gamma)=beta", cross))
            if beta > -RHO:
                cross = (beta - alpha) / (beta + 2.0 * RHO)
                if cross >= min(th.t1, 1.0):
                    out.append(("beta2=beta", cross))
        return [(k, v) for k, v in out if 0.0 < v <= 1.0]
    th = rates.thresholds(alpha, gamma)
    if theorem is Theorem.LOC_BELOW:
        out = [("beta1", th.beta1)] if th.beta1 >= 1.0 else []
    elif theorem is Theorem.LOC_ABOVE:
        if gamma < min(th.t1, 1.0):
            out = [("child_switch", th.child_switch)]
        else:
            out = [("-rho", -RHO)]
            if gamma < 1.0 and -RHO < th.beta2 <= 1.0:
                out.append(("beta2", th.beta2))
    return [(k, v) for k, v in out if math.isfinite(v)]


def _eval_slice(theorem, alpha, axis, value, gamma, beta):
    if axis == "gamma":
        return rates.rate(theorem, alpha, value, beta)
    return rates.rate(theorem, alpha, gamma, value)


def sweep_rows(theorem: Theorem, alpha: float, axis: str, grid: list[float],
               gamma: float | None = None, beta: float | None = None) -> list[dict]:
    """Rows of (param, value, regime, optimum) with boundary rows inserted."""
    marks = []
    if grid:
        lo, hi = min(grid), max(grid)
        marks = [(k, v) for k, v in breakpoints(theorem, alpha, axis, gamma, beta) if lo <= v <= hi]
    points = [(v, "") for v in grid] + [(v, k) for k, v in marks]
    points.sort(key=lambda p: (p[0], p[1] != ""))
    rows = []
    for v, label in points:
        try:
            ev = _eval_slice(theorem, alpha, axis, v, gamma, beta)
        except DomainError:
            continue
        rows.append({"param": v, "value": ev.value, "theorem": ev.regime.theorem.value,
                     "case": ev.regime.case_index, "region": ev.regime.region.value,
                     "tau_over_t": ev.opt_tau_fraction, "y_over_t": ev.opt_loc_coeff,
                     "breakpoint": label})
    return rows


def sweep_continuity(theorem: Theorem, alpha: float, axis: str, rows: list[dict],
                     gamma: float | None = None, beta: float | None = None) -> float:
    """Largest one-ulp jump of the rate across the flagged boundary rows."""
    worst = 0.0
    for row in rows:
        if not row["breakpoint"]:
            continue
        b = row["param"]
        vals = []
        for p in (np.nextafter(b, -np.inf), b, np.nextafter(b, np.inf)):
            try:
                vals.append(_eval_slice(theorem, alpha, axis, p, gamma, beta).value)
            except DomainError:
                pass
        if len(vals) > 1:
            worst = max(worst, max(vals) - min(vals))
    return worst


PLOT_TEMPLATE = '''import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open({csv!r})))
x = [float(r["param"]) for r in rows]
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
ax1.plot(x, [float(r["value"]) for r in rows])
ax1.set_xlabel({axis!r})
ax1.set_ylabel("rate")
ax2.plot(x, [float(r["y_over_t"]) for r in rows])
ax2.set_xlabel({axis!r})
ax2.set_ylabel("y / t")
for r in rows:
    if r["breakpoint"]:
        for ax in (ax1, ax2):
            ax.axvline(float(r["param"]), color="grey", lw=0.5)
fig.tight_layout()
fig.savefig({png!r})
'''


def cmd_sweep(args) -> int:
    theorem = Theorem(args.theorem)
    gamma_grid, beta_grid = is_grid(args.gamma), is_grid(args.beta)
    if gamma_grid == beta_grid:
        raise UsageError("exactly one of --gamma / --beta must be a grid (start:stop:step)")
    if gamma_grid:
        axis, grid = "gamma", parse_grid(args.gamma)
        gamma, beta = None, (float(args.beta) if args.beta is not None else None)
        if theorem in (Theorem.LOC_BELOW, Theorem.LOC_ABOVE) and beta is None:
            raise UsageError(f"{theorem.value} sweep over gamma needs --beta")
    else:
        if theorem not in (Theorem.LOC_BELOW, Theorem.LOC_ABOVE):
            raise UsageError(f"{theorem.value} has no beta parameter")
        if args.gamma is None:
            raise UsageError("beta sweep needs --gamma")
        axis, grid = "beta", parse_grid(args.beta)
        gamma, beta = float(args.gamma), None
    if gamma is not None:
        rates.thresholds(args.alpha, gamma)  # validates the fixed gamma
    rows = sweep_rows(theorem, args.alpha, axis, grid, gamma, beta)
    out = resolve_output(args.out, args.force)
    if args.format == "json":
        text = json.dumps({"theorem": theorem.value, "alpha": args.alpha, "axis": axis,
                           "gamma": gamma, "beta": beta, "rows": rows}, indent=2)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        text = buf.getvalue()
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text)
    if args.plot_script:
        if out is None or args.format != "csv":
            raise UsageError("--plot-script needs --out with --format csv")
        script = resolve_output(args.plot_script, args.force)
        script.write_text(PLOT_TEMPLATE.format(csv=str(out), axis=axis,
                                               png=str(out.with_suffix(".png"))))
    return 0


# --------------------------------------------------------------------------
# verify


def laplace_suite(t_list=(50.0, 100.0, 200.0, 400.0)) -> list[dict]:
    cases = [
        ("g=-lam on [0.2,1]", lambda x: -x, 0.2, 1.0, 200.0, 0.03),
        ("g=-(lam-0.5)^2 on [0,1]", lambda x: -(x - 0.5) ** 2, 0.0, 1.0, 400.0, 0.02),
        ("g=-|lam-0.3| on [0,1]", lambda x: -abs(x - 0.3), 0.0, 1.0, 400.0, 0.02),
    ]
    out = []
    for name, g, p, q, t_ref, tol in cases:
        ts = sorted(set(t_list) | {t_ref})
        rep = variational.laplace_check(g, p, q, ts)
        err_ref = rep.errors[ts.index(t_ref)]
        out.append({"name": name, "t": ts, "errors": rep.errors, "max_error": rep.max_error,
                    "decreasing": rep.decreasing(), "error_at_ref": err_ref, "tol": tol,
                    "pass": bool(rep.decreasing() and err_ref <= tol)})
    return out


def cmd_verify(args) -> int:
    suite = args.suite
    if suite == "identities":
        checks = [c.as_dict() for c in rates.identity_suite(args.draws, args.seed)]
    elif suite == "continuity":
        checks = [c.as_dict() for c in rates.continuity_suite(args.draws, args.seed)]
    elif suite == "oracle":
        reps = variational.oracle_sweep(tol=args.tol, eps=args.eps)
        checks = [r.as_dict() for r in reps]
    else:
        checks = laplace_suite()
    passed = all(c["pass"] for c in checks)
    report = {"suite": suite, "pass": passed, "checks": len(checks),
              "failures": [c for c in checks if not c["pass"]]}
    if suite == "oracle":
        report["worst_abs_diff"] = max(abs(c["closed"] - c["oracle"]) for c in checks)
        report["max_gap"] = max(c["gap"] for c in checks)
    else:
        report["results"] = checks
    out = resolve_output(args.out, args.force)
    if out is not None:
        out.write_text(json.dumps({**report, "all": checks}, indent=2, default=_json_default))
    emit_json(report)
    return 0 if passed else 1


# --------------------------------------------------------------------------
# experiments


def _fkpp_solution(args, t_end: float, alpha_min: float) -> fkpp.FkppSolution:
    if getattr(args, "config", None):
        cfg = fkpp.FkppConfig.from_file(args.config)
    else:
        cfg = fkpp.FkppConfig.default(t_end, alpha_min, dx=args.dx)
    return fkpp.solve(cfg)


def cmd_fkpp_slope(args) -> int:
    alphas = [float(a) for a in args.alpha.split(",")]
    ts = parse_grid(args.t)
    if len(ts) < 4:
        raise UsageError("fkpp-slope needs at least 4 times")
    sol = _fkpp_solution(args, max(ts), min(min(alphas), 0.0))
    if args.save:
        path = resolve_output(args.save, args.force)
        if path.suffix == ".csv":
            sol.save_csv(path, x_stride=args.save_x_stride)
        else:
            sol.save_npz(path)
    results = []
    for a in alphas:
        fit = fkpp.slope_estimate(a, ts, sol=sol)
        target = rates.psi(a)
        results.append({"alpha": a, **fit.as_dict(), "psi": target,
                        "rel_error": fit.psi_hat / target - 1.0})
    emit_json({"t": ts, "dx": sol.config.dx, "dt": sol.config.dt, "fits": results})
    return 0


def cmd_decompose(args) -> int:
    theorem = Theorem(args.theorem)
    if theorem is Theorem.UNCONSTRAINED:
        raise UsageError("decompose needs a constrained theorem")
    ts = parse_grid(args.t)
    mode = decomposition.Mode(args.mode)
    spec = variational.spec_for(theorem, args.alpha, args.gamma, args.beta, eps=args.eps)
    target = rates.rate(theorem, args.alpha, args.gamma, args.beta)
    sol = None
    if mode is decomposition.Mode.EXACT:
        sol = _fkpp_solution(args, max(ts), min(args.alpha, 0.0) - 0.5)
    rows = []
    for t in ts:
        q = decomposition.DecompositionQuery(args.alpha, t, spec, mode)
        est = decomposition.constrained_prob(q, sol, tol=args.tol)
        rows.append({"alpha": args.alpha, "gamma": args.gamma, "beta": args.beta, "t": t,
                     "mode": mode.value, "ln_prob": est.ln_prob,
                     "minus_log_over_t": est.minus_log_over_t,
                     "quadrature_error": est.quadrature_error})
    report = {"theorem": theorem.value, "window": list(spec.tau_window),
              "target": target.value, "rows": rows}
    if len(ts) >= 3:
        fit = decomposition.slope_fit(ts, [r["ln_prob"] for r in rows])
        report["fit"] = fit.as_dict()
        report["rel_error"] = fit.psi_hat / target.value - 1.0
    out = resolve_output(args.out, args.force)
    if out is not None:
        with open(out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=DECOMP_FIELDS, extrasaction="ignore")
            w.writeheader()
            w.writerows(rows)
    emit_json(report)
    return 0


def cmd_simulate(args) -> int:
    cfg = mc.McConfig(args.t, args.alpha, args.replicas, args.seed,
                      population_cap=args.population_cap, block_size=args.block_size)
    res = mc.run_blocks(cfg, workers=args.workers)
    est = mc.estimate_prob(cfg, result=res)
    report = {"t": args.t, "alpha": _jsonable(args.alpha), "seed": args.seed, **est.summary()}
    report["unconditional_mean_tau_over_t"] = mc.unconditional_tau_mean(args.t)
    try:
        summ = mc.conditional_first_branch(cfg, estimate=est, bins=args.bins)
        report["conditional"] = summ.as_dict()
    except mc.TooFewHitsError as exc:
        report["conditional"] = {"error": str(exc)}
    out = resolve_output(args.csv, args.force)
    if out is not None:
        mc.export_csv(est, cfg, res, out)
    emit_json(report)
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    theorems = [t.value for t in Theorem]
    p = argparse.ArgumentParser(prog="bbm-lowmax",
                                description="Rates for branching Brownian motion with a low maximum.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("eval", help="evaluate one rate")
    e.add_argument("--theorem", choices=theorems, default="unconstrained")
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--gamma", type=float)
    e.add_argument("--beta", type=float)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="rate curve over gamma or beta, with regime boundaries")
    s.add_argument("theorem", choices=theorems)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--gamma", help="value or start:stop:step")
    s.add_argument("--beta", help="value or start:stop:step")
    s.add_argument("--format", choices=["csv", "json"], default="csv")
    s.add_argument("--out")
    s.add_argument("--plot-script", help="also write a matplotlib script for the CSV")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=["identities", "continuity", "oracle", "laplace"])
    v.add_argument("--draws", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", type=float, default=1e-5)
    v.add_argument("--eps", type=float, default=0.0, help="pinned-window width for fixed-time rates")
    v.add_argument("--out")
    v.add_argument("--force", action="store_true")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fkpp-slope", help="fit decay rates from the FKPP solution")
    f.add_argument("--alpha", required=True, help="value or comma list")
    f.add_argument("--t", default="10:40:5")
    f.add_argument("--dx", type=float, default=0.05)
    f.add_argument("--config", help="key=value file with FkppConfig fields")
    f.add_argument("--save", help="write the solution (.npz or .csv)")
    f.add_argument("--save-x-stride", type=int, default=10)
    f.add_argument("--force", action="store_true")
    f.set_defaults(func=cmd_fkpp_slope)

    d = sub.add_parser("decompose", help="constrained probabilities via the first branching")
    d.add_argument("--theorem", choices=theorems[1:], default="time")
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--gamma", type=float, required=True)
    d.add_argument("--beta", type=float)
    d.add_argument("--mode", choices=["exact", "asymptotic"], default="exact")
    d.add_argument("--t", default="10,20,30,40")
    d.add_argument("--eps", type=float, default=1e-3)
    d.add_argument("--tol", type=float, default=1e-4)
    d.add_argument("--dx", type=float, default=0.05)
    d.add_argument("--config")
    d.add_argument("--out")
    d.add_argument("--force", action="store_true")
    d.set_defaults(func=cmd_decompose)

    m = sub.add_parser("simulate", help="Monte Carlo estimate of the low-maximum probability")
    m.add_argument("--alpha", type=parse_alpha, required=True, help="slope, or inf for no conditioning")
    m.add_argument("--t", type=float, required=True)
    m.add_argument("--replicas", type=int, default=100_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--block-size", type=int, default=mc.DEFAULT_BLOCK)
    m.add_argument("--population-cap", type=int, default=1_000_000)
    m.add_argument("--bins", type=int, default=20)
    m.add_argument("--csv", help="per-replica export")
    m.add_argument("--force", action="store_true")
    m.set_defaults(func=cmd_simulate)
    return p


def _join_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--beta -3:1:0.01`` into ``--beta=-3:1:0.01``.

    argparse only accepts a leading minus in a value when the value parses as
    a plain number, which grids do not.
    """
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if (tok.startswith("--") and "=" not in tok and len(nxt) > 1
                and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == ".")):
            out.append(f"{tok}={nxt}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_join_negative_values(argv))
    try:
        return args.func(args)
    except (DomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (fkpp.FkppError, decomposition.QuadratureError, decomposition.CoverageError,
            mc.PopulationCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
