"""End-to-end second-order analysis of a configured control problem.

``analyze`` solves the problem, certifies the first-order condition, samples
critical directions, evaluates ``F''(u)v^2 + G''(u, -F'(u); v)`` on each,
probes quadratic growth around the solution and writes a JSON report plus
CSV tables (including plot-ready quotient-versus-t curves).
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from sparsoc import cones, second_order
from sparsoc.config import RunConfig
from sparsoc.errors import MaxIterReached, SparsocError, UnknownValue
from sparsoc.fnspace import GridFunction
from sparsoc.pde import StateTriple
from sparsoc.solver import SolveResult, solve_ocp, total_objective
from sparsoc.sparsity import SparsityKind, classify

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
FIRST_ORDER_TOL = 1e-8
SECOND_ORDER_TOL = 1e-10


def _num(x):
    """JSON-safe float: infinities and NaN become strings."""
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class CriticalSample:
    id: int
    hessian: float
    second_subderivative: float | None  # None when the value is not known in closed form
    diverging: bool
    total: float | None
    passed: bool | None
    status: str = "ok"

    def to_dict(self):
        d = asdict(self)
        for k in ("hessian", "second_subderivative", "total"):
            d[k] = _num(d[k])
        d["pass"] = d.pop("passed")
        return d


@dataclass
class GrowthProbe:
    samples: int
    radius: float
    fitted_c: float  # min (J(u) - J(ubar)) / ||u - ubar||^2
    min_margin: float  # fitted_c - threshold
    threshold: float
    random_min: float
    directed_min: float
    passed: bool

    def to_dict(self):
        d = {k: _num(v) if isinstance(v, float) else v for k, v in asdict(self).items()}
        d["pass"] = d.pop("passed")
        return d


@dataclass
class SocReport:
    status: str
    first_order: dict
    critical_samples: list = field(default_factory=list)
    growth: GrowthProbe | None = None
    counterexample: dict | None = None
    notes: list = field(default_factory=list)
    solution: dict = field(default_factory=dict)

    def to_dict(self, timestamp: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "first_order": {k: _num(v) if isinstance(v, float) else v for k, v in self.first_order.items()},
            "critical_samples": [c.to_dict() for c in self.critical_samples],
            "growth": self.growth.to_dict() if self.growth else None,
            "counterexample": self.counterexample,
            "notes": list(self.notes),
            "solution": self.solution,
        }
        if timestamp:
            d["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        return d


def growth_probe(run: RunConfig, res: SolveResult, directions, rng) -> GrowthProbe:
    """Sample ``(J(u) - J(ubar)) / ||u - ubar||^2`` over feasible ``u`` near ``ubar``.

    Random points are ``P_box(ubar + eps * r * d)`` with ``d`` uniform on the
    unit sphere and ``r`` uniform in ``(0, 1]``; directed points use the
    sampled critical directions instead of ``d``.
    """
    cfg = run.problem
    eps = run.analysis.growth_radius
    n = run.analysis.growth_samples
    ubar = res.u
    J0 = total_objective(cfg, ubar)
    spec = ubar.spec

    def ratio(d, r):
        u = ubar.with_values(np.clip(ubar.values + eps * r * d.values, cfg.alpha, cfg.beta))
        dist2 = (u - ubar).norm() ** 2
        if dist2 == 0.0:
            return math.inf
        return (total_objective(cfg, u) - J0) / dist2

    rand = []
    for _ in range(n):
        d = GridFunction(spec, rng.standard_normal(spec.shape))
        rand.append(ratio(d / d.norm(), 1.0 - rng.random()))
    directed = [ratio(v, r) for v in directions for r in (1.0, 0.5, 0.1, 0.01)]
    threshold = cfg.nu / 4 if cfg.nu > 0 else 0.0
    rmin = min(rand) if rand else math.inf
    dmin = min(directed) if directed else math.inf
    c = min(rmin, dmin)
    return GrowthProbe(n + len(directed), eps, c, c - threshold, threshold, rmin, dmin,
                       bool(c > 0 and c >= threshold))


def quotient_curves(run: RunConfig, res: SolveResult, directions) -> list[dict]:
    """Curvature quotients along recovery sequences, for plotting."""
    cfg = run.problem
    ts = [t for t in second_order.t_schedule(12) if t >= run.analysis.t_min * (1 - 1e-12)]
    rows = []
    if cfg.kind is SparsityKind.J2 and classify(res.u).is_zero:
        return rows
    for i, v in enumerate(directions):
        try:
            value = second_order.second_subderivative(cfg.kind, res.u, res.gradient, res.lam, v, mu=cfg.mu, box=cfg.box)
        except SparsocError:
            continue
        for t in ts:
            rc = second_order.check_recovery_properties(cfg.kind, res.u, v, t, res.gradient, res.lam, mu=cfg.mu, box=cfg.box)
            rows.append({"direction": i, "t": t, "quotient": rc.quotient, "closed_form": float(value),
                         "gap": abs(rc.quotient - float(value)), "properties_hold": rc.all_hold})
    return rows


def analyze(run: RunConfig, *, seed: int | None = None, samples: int | None = None):
    """Run the full pipeline; returns ``(SocReport, tables)``.

    ``tables`` maps CSV file stems to lists of row dicts.
    """
    cfg = run.problem
    seed = run.analysis.seed if seed is None else seed
    samples = run.analysis.samples if samples is None else samples
    rng = np.random.default_rng(seed)
    tables: dict[str, list] = {}
    notes = []
    try:
        res = solve_ocp(cfg, tol=run.solver.tol, max_iter=run.solver.max_iter, step=run.solver.step)
        status = "ok"
    except MaxIterReached as exc:
        res = exc.result
        status = "solver-max-iter"
        notes.append(str(exc))
    first = {"residual": res.kkt_residual, "pass": bool(res.kkt_residual <= FIRST_ORDER_TOL),
             "iterations": res.iterations, "objective": res.objective}
    ubar, g, lam = res.u, res.gradient, res.lam
    solution = {"sparsity": float(np.mean(ubar.values == 0.0)), "l2_norm": ubar.norm(), "max_abs": ubar.max_abs()}
    report = SocReport(status, first, notes=notes, solution=solution)
    if not first["pass"]:
        report.status = "first-order-failure" if status == "ok" else status
        return report, tables

    if cfg.kind is SparsityKind.J2 and classify(ubar).is_zero:
        notes.append("j2 at ubar = 0: sampled critical cone is grid dependent and G'' is not known in closed form")
    directions = cones.sample_critical(cfg.kind, ubar, g, lam, samples, seed, mu=cfg.mu, box=cfg.box)
    state = StateTriple.build(cfg.pde, ubar)
    for i, v in enumerate(directions):
        h = state.hessian(v, v)
        try:
            gpp = second_order.second_subderivative(cfg.kind, ubar, g, lam, v, mu=cfg.mu, box=cfg.box)
        except UnknownValue:
            report.critical_samples.append(CriticalSample(i, h, None, False, None, None, "unknown"))
            continue
        total = h + float(gpp)
        report.critical_samples.append(CriticalSample(i, h, float(gpp), gpp.diverging, total, bool(total > 0)))
    if any(c.total is not None and c.total < -SECOND_ORDER_TOL for c in report.critical_samples):
        report.status = "necessary-condition violation"
    report.growth = growth_probe(run, res, directions, rng)
    tables["critical_samples"] = [c.to_dict() for c in report.critical_samples]
    tables["quotient_curves"] = quotient_curves(run, res, directions)
    tables["growth"] = [report.growth.to_dict()]
    return report, tables


def write_json(data: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_tables(tables: dict, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, rows in tables.items():
        path = directory / f"{stem}.csv"
        with open(path, "w", newline="") as fh:
            if rows:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                writer.writerows(rows)
        written.append(path)
    return written
