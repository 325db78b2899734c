"""Finite-difference and variational self-checks gathered into one table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sparsoc import pde, second_order, sparsity
from sparsoc.cones import sample_critical
from sparsoc.config import RunConfig
from sparsoc.errors import SparsocError
from sparsoc.fnspace import GridFunction, GridSpec
from sparsoc.synthetic import stationary_instance

EPS = np.finfo(float).eps


@dataclass
class CheckRow:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "pass": self.passed, "detail": self.detail}


def observed_orders(hs, errors, floors) -> list[float]:
    """Convergence orders between consecutive step sizes.

    Pairs in which either error is below its roundoff floor are skipped;
    such errors are already as small as floating point allows.
    """
    out = []
    for (h0, e0, f0), (h1, e1, f1) in zip(zip(hs, errors, floors), list(zip(hs, errors, floors))[1:]):
        if e0 <= f0 or e1 <= f1:
            continue
        out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def order_check(hs, errors, floors, required: float) -> tuple[float, bool]:
    """Smallest observed order (``inf`` if every error sits at roundoff) and verdict."""
    orders = observed_orders(hs, errors, floors)
    worst = min(orders) if orders else math.inf
    return worst, worst >= required


def _rand(rng, spec, scale=1.0):
    return GridFunction(spec, scale * rng.standard_normal(spec.shape))


def dir_deriv_check(kind, ubar, v, ts=(1e-3, 1e-4, 1e-5)):
    """Forward quotients ``(j(u+tv)-j(u))/t`` against ``j'(u;v)``; order >= 0.9 expected."""
    d = sparsity.j_dir_deriv(kind, ubar, v)
    j0 = sparsity.j_value(kind, ubar)
    errs, floors = [], []
    for t in ts:
        q = (sparsity.j_value(kind, ubar + t * v) - j0) / t
        errs.append(abs(q - d))
        floors.append(64 * EPS * max(1.0, j0) / t)
    return order_check(ts, errs, floors, 0.9)


def gradient_check(cfg, u, v, hs=(1e-3, 1e-4, 1e-5)):
    st = pde.StateTriple.build(cfg, u)
    ref = st.gradient().inner(v)
    errs, floors = [], []
    for h in hs:
        fp = pde.objective_smooth(cfg, u + h * v)
        fm = pde.objective_smooth(cfg, u - h * v)
        errs.append(abs((fp - fm) / (2 * h) - ref))
        floors.append(64 * EPS * (abs(fp) + abs(fm)) / (2 * h) + 1e-14 * abs(ref))
    return order_check(hs, errs, floors, 1.9)


def hessian_check(cfg, u, v1, v2, hs=(1e-3, 1e-4, 1e-5)):
    ref = pde.hess_apply(cfg, u, v1, v2)
    errs, floors = [], []
    for h in hs:
        gp = pde.grad_smooth(cfg, u + h * v1).inner(v2)
        gm = pde.grad_smooth(cfg, u - h * v1).inner(v2)
        errs.append(abs((gp - gm) / (2 * h) - ref))
        floors.append(64 * EPS * (abs(gp) + abs(gm) + v2.norm() * v1.norm()) / (2 * h) + 1e-14 * abs(ref))
    return order_check(hs, errs, floors, 1.9)


def adjoint_identity(cfg, u, v) -> float:
    st = pde.StateTriple.build(cfg, u)
    z = st.linearized(v)
    g = st.y - cfg.y_d
    lhs = g.inner(z)
    rhs = st.phi.inner(v)
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)


def psi_check(f, g, dt, hs=(1e-2, 1e-3)):
    """Central-difference stencils for the three derivatives of ``||.||``; order >= 1.9."""
    psi = lambda x: math.sqrt(float(np.dot(x, x)) * dt)
    _, d1, d2, d3 = second_order.psi_eval(f, g, dt)
    worst = math.inf
    ok = True
    stencils = [
        (lambda h: (psi(f + h * g) - psi(f - h * g)) / (2 * h), d1, 1),
        (lambda h: (psi(f + h * g) - 2 * psi(f) + psi(f - h * g)) / h**2, d2, 2),
        (lambda h: (psi(f + 2 * h * g) - 2 * psi(f + h * g) + 2 * psi(f - h * g) - psi(f - 2 * h * g)) / (2 * h**3), d3, 3),
    ]
    scale = psi(f) + psi(g)
    for fd, ref, order in stencils:
        errs = [abs(fd(h) - ref) for h in hs]
        floors = [64 * EPS * scale / h**order for h in hs]
        o, passed = order_check(hs, errs, floors, 1.9)
        worst = min(worst, o)
        ok &= passed
    return worst, ok


def prox_variational_gap(kind, mu, step, u, box, rng, samples=50) -> float:
    """Largest violation of ``P(z) >= P(w) + ||z - w||^2 / 2`` over random feasible ``z``.

    ``P`` is the prox objective, which is 1-strongly convex, so the
    inequality holds for every feasible ``z`` exactly when ``w`` is the
    minimizer.
    """
    w = sparsity.prox(kind, mu, step, u, box)
    pw = sparsity.prox_objective(kind, mu, step, u, w)
    worst = 0.0
    for k in range(samples):
        scale = 10.0 ** rng.uniform(-6, 0)
        z = w.with_values(np.clip(w.values + scale * rng.standard_normal(w.values.shape), *box))
        if k % 3 == 0:  # probe the sparsity pattern directly
            z = z.with_values(np.where(rng.random(w.values.shape) < 0.3, 0.0, z.values))
        gap = pw + 0.5 * (z - w).norm() ** 2 - sparsity.prox_objective(kind, mu, step, u, z)
        worst = max(worst, gap)
    return worst


def fd_check_suite(run: RunConfig, seed: int = 0, instances: int = 3) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    rows: list[CheckRow] = []
    kinds = list(sparsity.SparsityKind)
    small = GridSpec.uniform(3, 3)

    for kind in kinds:
        worst, ok = math.inf, True
        for _ in range(instances):
            base = rng.standard_normal(small.shape)
            base[rng.random(small.shape) < 0.3] = 0.0
            o, p = dir_deriv_check(kind, GridFunction(small, base), _rand(rng, small))
            worst, ok = min(worst, o), ok and p
        rows.append(CheckRow(f"dir_deriv_{kind.value}", worst, 0.9, ok, "min observed order, forward quotient"))

    cfg = run.problem.pde
    spec = cfg.spec
    u = _rand(rng, spec, 2.0)
    worst_g, ok_g, worst_h, ok_h, worst_a = math.inf, True, math.inf, True, 0.0
    for _ in range(instances):
        v1, v2 = _rand(rng, spec), _rand(rng, spec)
        o, p = gradient_check(cfg, u, v1)
        worst_g, ok_g = min(worst_g, o), ok_g and p
        o, p = hessian_check(cfg, u, v1, v2)
        worst_h, ok_h = min(worst_h, o), ok_h and p
        worst_a = max(worst_a, adjoint_identity(cfg, u, v1))
    rows.append(CheckRow("gradient", worst_g, 1.9, ok_g, "min observed order, central difference"))
    rows.append(CheckRow("hessian", worst_h, 1.9, ok_h, "min observed order, central difference"))
    rows.append(CheckRow("adjoint_identity", worst_a, 1e-10, worst_a <= 1e-10, "max relative mismatch"))

    worst_p, ok_p = math.inf, True
    for _ in range(instances):
        n = int(rng.integers(3, 20))
        f, g = rng.standard_normal(n), rng.standard_normal(n)
        o, p = psi_check(f, g, 1.0 / n)
        worst_p, ok_p = min(worst_p, o), ok_p and p
    rows.append(CheckRow("psi_derivatives", worst_p, 1.9, ok_p, "min observed order over all three stencils"))

    prox_spec = GridSpec.uniform(3, 4)
    for kind in kinds:
        worst = 0.0
        for _ in range(instances):
            u0 = _rand(rng, prox_spec, 2.0)
            box = (-rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0))
            worst = max(worst, prox_variational_gap(kind, rng.uniform(0.01, 2), rng.uniform(0.1, 2), u0, box, rng))
        rows.append(CheckRow(f"prox_{kind.value}", worst, 1e-12, worst <= 1e-12, "max strong-convexity violation"))

    rec_spec = GridSpec.uniform(3, 3)
    for kind in kinds:
        ok, worst = True, 0.0
        detail = "max identity residual; all recovery properties"
        try:
            for k in range(instances):
                inst = stationary_instance(kind, rec_spec, mu=0.5, box=(-1.0, 1.0), seed=seed * 1000 + k)
                vs = sample_critical(kind, inst.ubar, inst.gradF, inst.lam, 2, seed + k, mu=inst.mu, box=inst.box)
                for v in vs:
                    for t in (1e-2, 1e-3, 1e-4):
                        rc = second_order.check_recovery_properties(
                            kind, inst.ubar, v, t, inst.gradF, inst.lam, mu=inst.mu, box=inst.box)
                        ok &= rc.all_hold
                        worst = max(worst, rc.identity_residual)
        except SparsocError as exc:
            ok, worst, detail = False, math.nan, f"{type(exc).__name__}: {exc}"
        rows.append(CheckRow(f"recovery_{kind.value}", worst, second_order.IDENTITY_TOL, ok, detail))
    return rows
