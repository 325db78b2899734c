"""Command line front end (``sparsoc``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from sparsoc import __version__
from sparsoc.config import load_config
from sparsoc.counterexample import default_schedule, reproduce_j2_counterexample
from sparsoc.errors import ConfigError, MaxIterReached, SparsocError
from sparsoc.fdcheck import fd_check_suite
from sparsoc.fnspace import write_binary, write_csv
from sparsoc.report import analyze, write_json, write_tables
from sparsoc.solver import solve_ocp


def _cmd_analyze(args) -> int:
    run = load_config(args.config)
    report, tables = analyze(run, seed=args.seed, samples=args.samples)
    data = report.to_dict()
    if args.json:
        write_json(data, args.json)
    if args.csv_dir:
        write_tables(tables, args.csv_dir)
    fo = report.first_order
    print(f"status: {report.status}")
    print(f"first order: residual {fo['residual']:.3e} ({'pass' if fo['pass'] else 'FAIL'})")
    for c in report.critical_samples:
        total = "unknown" if c.total is None else f"{c.total:.6g}"
        print(f"critical direction {c.id}: F''v^2 = {c.hessian:.6g}, sum = {total}")
    if report.growth:
        gr = report.growth
        print(f"growth: min ratio {gr.fitted_c:.6g} over {gr.samples} samples (threshold {gr.threshold:.3g}, "
              f"{'pass' if gr.passed else 'FAIL'})")
    ok = report.status == "ok" and (report.growth is None or report.growth.passed)
    return 0 if ok else 1


def _cmd_counterexample(args) -> int:
    table = reproduce_j2_counterexample(default_schedule(args.tmin), n=args.grid)
    print(f"{'t':>12} {'j2':>12} {'j2 exact':>12} {'pairing':>12} {'quotient':>12}")
    for r in table.rows:
        print(f"{r.t:12.6g} {r.j2:12.8f} {r.j2_exact:12.8f} {r.pairing:12.8f} {r.quotient:12.8f}")
    print(f"extrapolated limit: {table.limit:.6f} (at t = {table.limit_t:.6g}; expected 1/3)")
    data = {"schema_version": "1.0", "counterexample": table.to_dict()}
    if args.json:
        write_json(data, args.json)
    if args.csv_dir:
        write_tables({
            "counterexample": [vars(r) for r in table.rows],
            "counterexample_richardson": [{"t": t, "value": v} for t, v in table.richardson],
        }, args.csv_dir)
    return 0


def _cmd_fdcheck(args) -> int:
    run = load_config(args.config)
    rows = fd_check_suite(run, seed=args.seed or 0)
    width = max(len(r.name) for r in rows)
    for r in rows:
        print(f"{r.name:<{width}}  {r.value:12.4g}  {r.threshold:10.3g}  {'pass' if r.passed else 'FAIL'}")
    if args.json:
        write_json({"schema_version": "1.0", "checks": [r.to_dict() for r in rows]}, args.json)
    return 0 if all(r.passed for r in rows) else 1


def _cmd_solve(args) -> int:
    run = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    code = 0
    try:
        res = solve_ocp(run.problem, tol=run.solver.tol, max_iter=run.solver.max_iter, step=run.solver.step)
    except MaxIterReached as exc:
        res, code = exc.result, 1
    write_csv(res.u, out / "control.csv")
    write_binary(res.u, out / "control.bin")
    write_csv(res.lam, out / "multiplier.csv")
    summary = {"schema_version": "1.0", "iterations": res.iterations, "kkt_residual": res.kkt_residual,
               "objective": res.objective, "converged": res.converged, "history": res.history}
    write_json(summary, out / "summary.json")
    print(f"iterations {res.iterations}, KKT residual {res.kkt_residual:.3e}, objective {res.objective:.10g}")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsoc", description="Second-order checks for sparse optimal control.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--json", metavar="PATH")

    a = sub.add_parser("analyze", help="solve, certify first- and second-order conditions, probe growth")
    a.add_argument("config")
    common(a)
    a.add_argument("--samples", type=int, default=None)
    a.add_argument("--csv-dir", metavar="PATH")
    a.set_defaults(func=_cmd_analyze)

    c = sub.add_parser("counterexample", help="curvature quotients of j2 at the origin")
    c.add_argument("--grid", type=int, default=512)
    c.add_argument("--tmin", type=float, default=2.0**-10)
    common(c)
    c.add_argument("--csv-dir", metavar="PATH")
    c.set_defaults(func=_cmd_counterexample)

    f = sub.add_parser("fdcheck", help="finite-difference and variational self-checks")
    f.add_argument("config", nargs="?", default=None)
    common(f)
    f.set_defaults(func=_cmd_fdcheck)

    s = sub.add_parser("solve", help="solve the control problem and write the solution")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_solve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SparsocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
