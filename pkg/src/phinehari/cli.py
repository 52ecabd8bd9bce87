"""``nehari`` command line: check, project, solve, sweep.

Exit codes: 0 success, 1 a check or solve failed, 2 bad usage or config.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .config import RunConfig, build_problem, default_direction, load_config
from .energy import DirectionProfile, fibering_table
from .errors import ConfigError, ConsistencyError, HypothesisError, NehariError, NoProjectionError
from .expr import field_from_expr
from .io import write_field_csv, write_json, write_jsonl, write_table_csv
from .nehari import CASE_TWO, CASE_MINUS_ONLY, project, projection_case, t_tilde, thresholds
from .nfunction import parse_family, sample_grid, verify_conditions
from .plotting import plot_decay, plot_fibering, plot_traces
from .solver import nonnegative_report, solve, sweep_lambda

log = logging.getLogger("phinehari")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "nehari-out"
LAMBDA_WARNING = "warning: λ ≥ Λ estimate; theory silent"


def _out_dir(args, cfg: RunConfig, command: str) -> Path:
    base = args.out or cfg.out or DEFAULT_OUT
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _threads(args, cfg: RunConfig) -> int:
    if args.threads is not None:
        n = args.threads
    elif os.environ.get("NEHARI_THREADS"):
        try:
            n = int(os.environ["NEHARI_THREADS"])
        except ValueError:
            raise ConfigError("NEHARI_THREADS must be an integer") from None
    else:
        n = cfg.threads or 1
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    kernels.set_threads(n)
    return n


def _hypothesis_failures(ps) -> list:
    try:
        return [(name, detail) for name, ok, detail in ps.hypothesis_checks() if not ok]
    except HypothesisError as exc:
        return [(exc.which, str(exc))]


def _warn_hypothesis(ps) -> bool:
    bad = _hypothesis_failures(ps)
    for _, detail in bad:
        print(f"warning: standing hypothesis violated: {detail}", file=sys.stderr)
    return not bad


# ---------------------------------------------------------------------------
# commands


def cmd_check(args, cfg: RunConfig) -> int:
    nf = parse_family(cfg.family)
    report = verify_conditions(nf, cfg.dim)
    ok = report.ok
    for name, c in report.checks.items():
        status = "pass" if c["pass"] else "FAIL"
        extra = f" ({c['detail']})" if c.get("detail") else ""
        print(f"{name:<14} {status}{extra}")
    hyp = []
    try:
        ps = build_problem(cfg)
        hyp = ps.hypothesis_checks()
    except HypothesisError as exc:
        hyp = [(exc.which, False, str(exc))]
    for name, passed, detail in hyp:
        print(f"hyp {detail:<60} {'pass' if passed else 'FAIL'}")
        ok = ok and passed
    failed = [d for _, p, d in hyp if not p]
    if failed:
        print(f"standing hypothesis violated: {failed[0]}")
    out = _out_dir(args, cfg, "check")
    if args.dump:
        t = sample_grid()
        write_table_csv(out / "nfunction.csv", {
            "t": t, "Phi": nf.big_phi(t), "t_phi": nf.s_phi(t), "quotient": nf.s2_phi(t) / nf.big_phi(t),
        })
    write_json(out / "check.json", {
        "ok": ok,
        "conditions": report.to_dict(),
        "hypothesis": [{"name": n, "pass": p, "detail": d} for n, p, d in hyp],
    })
    print("all checks passed" if ok else "checks failed")
    return EXIT_OK if ok else EXIT_FAIL


def _t_grid(roots, tt):
    pts = [r for r in roots] + ([tt] if tt else [])
    lo = min(pts) / 100.0 if pts else 1e-3
    hi = max(pts) * 100.0 if pts else 1e3
    return np.logspace(np.log10(lo), np.log10(hi), 400)


def cmd_project(args, cfg: RunConfig) -> int:
    ps = build_problem(cfg)
    _warn_hypothesis(ps)
    u = field_from_expr(ps.grid, args.direction) if args.direction else default_direction(cfg)
    prof = DirectionProfile(ps, u)
    case = projection_case(prof.P, prof.Q)
    out = _out_dir(args, cfg, "project")
    print(f"case {case}")
    tt = t_tilde(ps, u, prof) if case in (CASE_TWO, CASE_MINUS_ONLY) else None
    try:
        points = project(ps, u, prof)
    except NoProjectionError as exc:
        print(f"no projection ({exc.case}): {exc}")
        write_json(out / "projection.json", {"case": case, "roots": [], "error": str(exc)})
        if args.dump and tt is not None:
            table = fibering_table(ps, prof, _t_grid([], tt))
            write_table_csv(out / "fibering.csv", table)
        return EXIT_FAIL
    for p in points:
        print(f"{p.branch:<5} t = {p.t:.12g}  J = {p.energy:.12g}  gamma''(1) = {p.gamma2_value:.6g}")
    if tt is not None:
        print(f"t_tilde = {tt:.12g}")
    roots = [p.t for p in points]
    table = fibering_table(ps, prof, _t_grid(roots, tt))
    if args.dump:
        write_table_csv(out / "fibering.csv", table)
    plot_fibering(table, roots, tt, out / "fibering.svg", lam_p=ps.lam * prof.P)
    write_json(out / "projection.json", {
        "case": case,
        "t_tilde": tt,
        "points": [p.summary() for p in points],
        "P": prof.P,
        "Q": prof.Q,
        "lambda": ps.lam,
    })
    return EXIT_OK


def _thresholds_or_none(ps, cfg, seed):
    try:
        return thresholds(ps, probe_seed=seed, probe_count=cfg.probe_count, kind=cfg.norm,
                          ascent_steps=cfg.ascent_steps)
    except HypothesisError as exc:
        print(f"thresholds skipped: {exc}", file=sys.stderr)
        return None


def _write_branch(out: Path, ps, res) -> bool:
    """Artifacts of one branch; False if the nonnegativity check fails."""
    write_jsonl(out / f"trace_{res.branch}.jsonl", res.trace)
    if res.point is None:
        return True
    try:
        field = nonnegative_report(ps, res.point.field)
    except ConsistencyError as exc:
        print(f"{res.branch}: {exc}", file=sys.stderr)
        return False
    write_field_csv(out / f"u_{res.branch}.csv", field)
    return True


def cmd_solve(args, cfg: RunConfig) -> int:
    if len(cfg.lambdas) != 1:
        print("solve needs a single lambda", file=sys.stderr)
        return EXIT_USAGE
    threads = _threads(args, cfg)
    seed = cfg.seed
    ps = build_problem(cfg)
    _warn_hypothesis(ps)
    th = _thresholds_or_none(ps, cfg, seed)
    if th is not None and ps.lam >= th.Lambda:
        print(LAMBDA_WARNING, file=sys.stderr)
    result = solve(ps, cfg.solve_options(seed=seed, threads=threads), thresholds=th)
    out = _out_dir(args, cfg, "solve")
    ok = result.ok
    for res in (result.plus, result.minus):
        ok = _write_branch(out, ps, res) and ok
        if args.dump and res.point is not None:
            tab = fibering_table(ps, res.point.field, np.geomspace(0.05, 20.0, 200))
            write_table_csv(out / f"fibering_{res.branch}.csv", tab)
        line = f"{res.branch:<5} {res.status:<10}"
        if res.point is not None:
            line += f" J = {res.energy:.10g}"
        if res.certificate is not None:
            line += f"  residual = {res.certificate.residual:.3e}"
        print(line)
    summary = {
        "config": cfg.to_dict(),
        "lambda": result.lambda_used,
        "plus": result.plus.summary(),
        "minus": result.minus.summary(),
        "thresholds": th.to_dict() if th is not None else None,
        "lambda_below_Lambda": (ps.lam < th.Lambda) if th is not None else None,
    }
    for key in ("plus", "minus"):
        summary[key].pop("wall_time", None)
    write_json(out / "summary.json", summary)
    if th is not None:
        write_json(out / "thresholds.json", th.to_dict())
    write_json(out / "timings.json", {
        "wall_times": result.wall_times,
        "threads": threads,
    })
    plot_traces({"plus": result.plus.trace, "minus": result.minus.trace}, out / "traces.svg")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(args, cfg: RunConfig) -> int:
    if len(cfg.lambdas) < 3:
        print("sweep: need ≥ 3 lambda values", file=sys.stderr)
        return EXIT_USAGE
    threads = _threads(args, cfg)
    seed = cfg.seed
    lambdas = sorted(cfg.lambdas, reverse=True)
    ps = build_problem(cfg, lam=lambdas[0])
    _warn_hypothesis(ps)
    th = _thresholds_or_none(ps, cfg, seed)
    S_ell = None
    if th is not None:
        if cfg.decay_norm == cfg.norm:
            S_ell = th.S_ell
        else:
            S_ell = thresholds(ps, probe_seed=seed, probe_count=cfg.probe_count,
                               kind=cfg.decay_norm, ascent_steps=cfg.ascent_steps).S_ell
    rows = sweep_lambda(ps, lambdas, cfg.solve_options(seed=seed, threads=threads),
                        S_ell=S_ell, norm_kind=cfg.decay_norm)
    dicts = [r.to_dict() for r in rows]
    out = _out_dir(args, cfg, "sweep")
    cols = {k: [d[k] for d in dicts] for k in dicts[0]}
    write_table_csv(out / "sweep.csv", cols)
    write_json(out / "sweep.json", {
        "config": cfg.to_dict(),
        "rows": dicts,
        "S_ell": S_ell,
        "decay_norm": cfg.decay_norm,
    })
    # the bound in norm units: (lam * C)^(1 / (alpha - q))
    bound = [r.bound_rhs ** (1.0 / (r.alpha - ps.q)) if np.isfinite(r.bound_rhs) and r.alpha > ps.q else None
             for r in rows]
    plot_decay(cols["lambda"], [np.nan if v is None else v for v in cols["norm"]], out / "decay.svg",
               bound=[np.nan if b is None else b for b in bound])
    failed = 0
    for d in dicts:
        good = d["converged_plus"] and d["converged_minus"] and d["error"] is None
        failed += not good
        print(f"lambda = {d['lambda']:.6g}  norm = {d['norm']:.6g}  "
              f"bound {'ok' if d['bound_ok'] else 'violated'}  {'ok' if good else 'FAILED'}")
    norms = np.array([d["norm"] for d in dicts], dtype=float)
    if np.all(np.isfinite(norms)):
        mono = bool(np.all(np.diff(norms) < 0))
        print(f"norm strictly decreasing: {'yes' if mono else 'no'}")
    return EXIT_OK if failed == 0 else EXIT_FAIL


COMMANDS = {"check": cmd_check, "project": cmd_project, "solve": cmd_solve, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nehari", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
    common.add_argument("--out", metavar="DIR", help="artifact directory")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    common.add_argument("--threads", type=int, metavar="N",
                        help="worker threads (fallback: NEHARI_THREADS)")
    common.add_argument("--dump", action="store_true", help="also write diagnostic CSV tables")
    sub.add_parser("check", parents=[common], help="check phi conditions and the standing hypothesis")
    p = sub.add_parser("project", parents=[common], help="project a direction onto the manifold")
    p.add_argument("--direction", metavar="EXPR", help="direction expression in x, y, z")
    sub.add_parser("solve", parents=[common], help="minimise on both branches")
    sub.add_parser("sweep", parents=[common], help="lambda sweep with warm starts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args, cfg)
    except HypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NehariError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
