"""Command-line front end: ``qed <command> --profile p.json ... --out file``.

Every command writes one CSV or JSON file. Reals are written with 17
significant digits so that doubles round-trip. Exit status is 2 for bad
input and 3 for numerical failure; the error class name goes to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Iterable, List, Optional

from . import finite, limit, sim, solver
from .errors import BAD_INPUT, NUMERICAL, DomainError, QedError
from .revenue import FiniteRevenue, RevenueProfile, load_profile
from .specfun import QuadratureConfig

EXIT_OK, EXIT_BAD_INPUT, EXIT_NUMERICAL = 0, 2, 3

GAP_HEADER = ["s", "tau_star", "tau_qed", "R_tau_star", "R_tau_qed", "rel_gap"]
SWEEP_HEADER = ["gamma", "eta_star", "method", "eta_min", "eta_max", "asym_neg", "asym_pos",
                "closed_form", "R_T0", "R_T_star", "eta_increasing", "R_T0_decreasing",
                "R_T_star_decreasing", "error"]


class _NumericFailure(QedError):
    pass


def fmt(x) -> str:
    """17 significant digits; non-finite values become empty strings."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if not math.isfinite(x):
        return ""
    return format(x + 0.0, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """Deterministic JSON with 17-digit reals and ``null`` for non-finite values."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(to_json(v, indent, _level + 1) for v in obj) + "]"
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float) or hasattr(obj, "__float__"):
        v = float(obj)
        # "+ 0.0" folds negative zero
        return format(v + 0.0, ".17g") if math.isfinite(v) else "null"
    return json.dumps(obj)


def _write(path: Optional[str], text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _csv_text(header: List[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def parse_s_list(text: str) -> List[int]:
    """Parse ``"1..256"``, ``"8,32,128"`` or a mix such as ``"1..4,16"``."""
    out: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if ".." in part:
                a, b = part.split("..", 1)
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise DomainError(f"empty range {part!r}")
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise DomainError(f"bad server list {text!r}") from exc
    if not out or min(out) < 1:
        raise DomainError("server counts must be positive")
    return out


def _gamma_grid(start: float, stop: float, step: float) -> List[float]:
    if not step > 0:
        raise DomainError("step must be positive")
    if stop < start:
        return []
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 12) for i in range(n + 1)]


def _safe(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except QedError:
        return None


# ---------------------------------------------------------------------------

def threshold_report(profile: RevenueProfile, gamma: float, cfg: QuadratureConfig) -> dict:
    k = limit.limit_constants(profile, gamma, cfg)
    res = solver.solve(profile, gamma, cfg)
    b = _safe(solver.bounds, profile, gamma, cfg)
    cf = _safe(solver.closed_form, profile, gamma, cfg)
    return {
        "profile": profile.to_dict(),
        "gamma": gamma,
        "eta_star": res.eta_star,
        "method": res.method,
        "residual": res.residual,
        "iterations": res.iterations,
        "eta_min": None if b is None else b.eta_min,
        "eta_max": None if b is None else b.eta_max,
        "R_upper": None if b is None else b.R_upper,
        "asym_neg": _safe(solver.asym_gamma_neg, profile, gamma) if gamma < 0 else None,
        "asym_pos": _safe(solver.asym_gamma_pos, profile, gamma) if gamma > 0 else None,
        "closed_form": None if cf is None else cf.eta_star,
        "closed_form_method": None if cf is None else cf.method,
        "R_T_star": limit.limit_revenue_threshold(profile, gamma, res.eta_star, cfg, k),
        "R_T0": k.R_T0,
        "A": k.A,
        "B": k.B,
    }


def gap_rows(profile: RevenueProfile, gamma: float, s_list: List[int], cfg: QuadratureConfig):
    eta = solver.solve(profile, gamma, cfg).eta_star
    b = _safe(solver.bounds, profile, gamma, cfg)
    rev = FiniteRevenue(profile)
    rows = []
    for s in s_list:
        params = finite.SystemParams(s, gamma)
        tau_q = int(math.floor(eta * math.sqrt(s)))
        tau_max = max(finite.default_tau_max(s, None if b is None else b.eta_max), tau_q + 2)
        opt = finite.optimal_tau(params, rev, tau_max, warn=False)
        if opt.at_window:
            raise _NumericFailure(f"optimal tau hit the search window at s={s}")
        r_star, r_q = opt.revenue, float(opt.values[tau_q])
        rows.append([s, opt.tau, tau_q, r_star, r_q, (r_star - r_q) / r_star])
    return rows


def sweep_rows(profile: RevenueProfile, grid: List[float], cfg: QuadratureConfig):
    rows = []
    prev = None
    for g in grid:
        try:
            k = limit.limit_constants(profile, g, cfg)
            res = solver.solve(profile, g, cfg)
            b = _safe(solver.bounds, profile, g, cfg)
            cf = _safe(solver.closed_form, profile, g, cfg)
            rstar = limit.limit_revenue_threshold(profile, g, res.eta_star, cfg, k)
            row = {"gamma": g, "eta_star": res.eta_star, "method": res.method,
                   "eta_min": None if b is None else b.eta_min,
                   "eta_max": None if b is None else b.eta_max,
                   "asym_neg": _safe(solver.asym_gamma_neg, profile, g) if g < 0 else None,
                   "asym_pos": _safe(solver.asym_gamma_pos, profile, g) if g > 0 else None,
                   "closed_form": None if cf is None else cf.eta_star,
                   "R_T0": k.R_T0, "R_T_star": rstar, "error": ""}
        except QedError as exc:
            row = {"gamma": g, "error": type(exc).__name__}
        if prev is not None and not row["error"] and not prev["error"]:
            row["eta_increasing"] = row["eta_star"] > prev["eta_star"]
            row["R_T0_decreasing"] = row["R_T0"] < prev["R_T0"]
            row["R_T_star_decreasing"] = row["R_T_star"] < prev["R_T_star"]
        rows.append(row)
        prev = row
    return [[r.get(h) if h != "method" else (r.get(h) or "") for h in SWEEP_HEADER] for r in rows]


def finite_report(profile: RevenueProfile, s: int, gamma: float, tau: int,
                  cfg: QuadratureConfig) -> dict:
    params = finite.SystemParams(s, gamma)
    rev = FiniteRevenue(profile)
    policy = finite.capacity_policy(tau)
    dist = finite.stationary_distribution(params, policy)
    table = finite.reward_from_revenue(rev, s, dist.k_trunc, lam=params.lam)
    eta = tau / math.sqrt(s)
    opt = finite.optimal_tau(params, rev, max(finite.default_tau_max(s), tau + 2), warn=False)
    return {
        "profile": profile.to_dict(),
        "s": s, "gamma": gamma, "lam": params.lam, "rho": params.rho,
        "tau": tau, "max_occupancy": s + tau,
        "erlang_b": finite.erlang_b(s, params.lam),
        "f_series": finite.f_series(params, policy),
        "pi": [float(v) for v in dist.probs],
        "R_T_s": finite.revenue_rate(params, policy, rev, dist),
        "customer_reward_rate": finite.customer_reward_rate(params, policy, table, dist),
        "R_T_limit": limit.limit_revenue_threshold(profile, gamma, eta, cfg),
        "tau_star": opt.tau,
        "R_T_s_star": opt.revenue,
    }


def expansion_report(profile: RevenueProfile, s: int, gamma: float, eta: float,
                     cfg: QuadratureConfig) -> dict:
    wr = limit.wsr_expansion(profile, s, gamma, eta=eta, cfg=cfg)
    wl = limit.wsl_expansion(profile, s, gamma, cfg=cfg)
    return {"profile": profile.to_dict(), "s": s, "gamma": gamma, "eta": eta,
            "gamma_s": wr.gamma_s, "wsr": wr.to_dict(), "wsl": wl.to_dict()}


def simulate_report(profile: RevenueProfile, s: int, gamma: float, tau: int, horizon: float,
                    warmup: float, batches: int, seed: int) -> dict:
    params = finite.SystemParams(s, gamma)
    rev = FiniteRevenue(profile)
    policy = finite.capacity_policy(tau)
    res = sim.simulate_revenue(params, policy, rev, sim.SimConfig(horizon, warmup, batches, seed))
    exact = finite.revenue_rate(params, policy, rev)
    return {"profile": profile.to_dict(), "s": s, "gamma": gamma, "tau": tau,
            "max_occupancy": s + tau, "horizon": horizon, "warmup": warmup,
            "batches": batches, "seed": seed, "rng": "PCG64 (numpy), SeedSequence.spawn per batch",
            "mean": res.mean, "ci95_halfwidth": res.ci95_halfwidth, "exact": exact,
            "covered": abs(res.mean - exact) <= res.ci95_halfwidth,
            "admitted_fraction": res.admitted_fraction,
            "batch_means": [float(v) for v in res.batch_means]}


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qed", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default_fmt):
        sp.add_argument("--profile", required=True, help="profile JSON file")
        sp.add_argument("--out", default="-", help="output path (default stdout)")
        sp.add_argument("--format", dest="fmt", choices=["csv", "json"], default=None,
                        help=f"output format (default from the --out suffix, else {out_default_fmt})")
        sp.set_defaults(default_fmt=out_default_fmt)

    t = sub.add_parser("threshold", help="optimal threshold report")
    common(t, "json")
    t.add_argument("--gamma", type=float, required=True)

    g = sub.add_parser("gap", help="finite-system optimality gap per server count")
    common(g, "csv")
    g.add_argument("--gamma", type=float, required=True)
    g.add_argument("--s", required=True, help="e.g. 1..256 or 8,32,128")
    g.add_argument("--plot", help="also render a figure to this path")

    w = sub.add_parser("sweep-gamma", help="threshold, bounds and asymptotics over a slack grid")
    common(w, "csv")
    w.add_argument("--from", dest="start", type=float, required=True)
    w.add_argument("--to", dest="stop", type=float, required=True)
    w.add_argument("--step", type=float, required=True)
    w.add_argument("--plot", help="also render a figure to this path")

    f = sub.add_parser("finite", help="exact finite-system quantities for one threshold")
    common(f, "json")
    f.add_argument("--s", type=int, required=True)
    f.add_argument("--gamma", type=float, required=True)
    f.add_argument("--tau", type=int, required=True,
                   help="threshold: occupancy is capped at s + tau")

    e = sub.add_parser("expansion", help="finite-size expansions against exact lattice sums")
    common(e, "json")
    e.add_argument("--s", type=int, required=True)
    e.add_argument("--gamma", type=float, required=True)
    e.add_argument("--eta", type=float, required=True)

    m = sub.add_parser("simulate", help="simulation estimate with 95% interval")
    common(m, "json")
    m.add_argument("--s", type=int, required=True)
    m.add_argument("--gamma", type=float, required=True)
    m.add_argument("--tau", type=int, required=True,
                   help="threshold: occupancy is capped at s + tau")
    m.add_argument("--horizon", type=float, required=True)
    m.add_argument("--warmup", type=float, default=None, help="default 1%% of horizon")
    m.add_argument("--batches", type=int, default=20)
    m.add_argument("--seed", type=int, default=0)

    pl = sub.add_parser("plot", help="render a figure from a gap or sweep CSV")
    pl.add_argument("--input", required=True)
    pl.add_argument("--kind", choices=["gap", "sweep"], required=True)
    pl.add_argument("--out", required=True)
    return p


def _resolve_format(args) -> str:
    if args.fmt:
        return args.fmt
    for ext in ("csv", "json"):
        if args.out.lower().endswith("." + ext):
            return ext
    return args.default_fmt


def _emit_report(args, report: dict):
    if _resolve_format(args) == "json":
        _write(args.out, to_json(report) + "\n")
        return
    # key,value rows; nested structures stay JSON-encoded in the value cell
    rows = [[k, v if isinstance(v, (int, float)) or v is None else
             (v if isinstance(v, str) else to_json(v, indent=0).replace("\n", ""))]
            for k, v in report.items()]
    _write(args.out, _csv_text(["key", "value"], rows))


def _emit_table(args, header: List[str], rows: List[list]):
    if _resolve_format(args) == "csv":
        _write(args.out, _csv_text(header, rows))
    else:
        _write(args.out, to_json([dict(zip(header, r)) for r in rows]) + "\n")


def _run(args) -> int:
    if args.command == "plot":
        from . import plotting
        plotting.render_csv(args.kind, args.input, args.out)
        return EXIT_OK

    cfg = QuadratureConfig.from_env()
    try:
        profile = load_profile(args.profile)
    except OSError as exc:
        raise DomainError(f"cannot read profile: {exc}") from exc

    if args.command == "threshold":
        _emit_report(args, threshold_report(profile, args.gamma, cfg))
    elif args.command == "gap":
        rows = gap_rows(profile, args.gamma, parse_s_list(args.s), cfg)
        _emit_table(args, GAP_HEADER, rows)
        if args.plot:
            from . import plotting
            plotting.plot_gap(rows, args.plot)
    elif args.command == "sweep-gamma":
        rows = sweep_rows(profile, _gamma_grid(args.start, args.stop, args.step), cfg)
        _emit_table(args, SWEEP_HEADER, rows)
        if args.plot:
            from . import plotting
            plotting.plot_sweep(rows, args.plot)
    elif args.command == "finite":
        _emit_report(args, finite_report(profile, args.s, args.gamma, args.tau, cfg))
    elif args.command == "expansion":
        _emit_report(args, expansion_report(profile, args.s, args.gamma, args.eta, cfg))
    elif args.command == "simulate":
        warmup = 0.01 * args.horizon if args.warmup is None else args.warmup
        rep = simulate_report(profile, args.s, args.gamma, args.tau, args.horizon,
                              warmup, args.batches, args.seed)
        _emit_report(args, rep)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except BAD_INPUT as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (NUMERICAL + (_NumericFailure,)) as exc:
        name = "WindowWarning" if isinstance(exc, _NumericFailure) else type(exc).__name__
        print(f"{name}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ImportError as exc:
        print(f"ImportError: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
