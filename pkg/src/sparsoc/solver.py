"""Proximal gradient solver for ``min F(u) + mu j(u)`` over the box."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from sparsoc.config import ProblemConfig
from sparsoc.errors import MaxIterReached
from sparsoc.fnspace import GridFunction
from sparsoc.pde import StateTriple, estimate_lipschitz
from sparsoc.sparsity import canonical_subgradient, j_value, prox, subdiff_violation

log = logging.getLogger(__name__)


@dataclass
class SolveResult:
    u: GridFunction
    lam: GridFunction
    gradient: GridFunction
    iterations: int
    kkt_residual: float
    history: list = field(default_factory=list)  # J(u_k) for accepted iterates
    steps: list = field(default_factory=list)
    converged: bool = True

    @property
    def objective(self) -> float:
        return self.history[-1] if self.history else math.nan


def total_objective(cfg: ProblemConfig, u: GridFunction, state: StateTriple | None = None) -> float:
    state = state or StateTriple.build(cfg.pde, u)
    return state.objective() + cfg.mu * j_value(cfg.kind, u)


def kkt_residual(cfg: ProblemConfig, u: GridFunction, lam: GridFunction, gradient: GridFunction | None = None) -> float:
    """Projected stationarity residual plus the subdifferential violation of ``lam``.

    ``||u - P_box(u - (F'(u) + mu lam))||`` measures ``-(F' + mu lam) in N(u)``;
    the second term is the ``L2`` norm of the pointwise violation of
    ``lam in dj(u)``.  Both vanish exactly at first-order points.
    """
    g = gradient if gradient is not None else StateTriple.build(cfg.pde, u).gradient()
    r = u.values - np.clip(u.values - (g.values + cfg.mu * lam.values), cfg.alpha, cfg.beta)
    viol, _ = subdiff_violation(cfg.kind, u, lam)
    hm = u.spec.cell_measure
    return math.sqrt(float(np.sum(r * r)) * hm) + math.sqrt(float(np.sum(viol * viol)) * hm)


def solve_ocp(cfg: ProblemConfig, u0: GridFunction | None = None, *, step: float | None = None,
              tol: float = 1e-10, max_iter: int = 2000) -> SolveResult:
    """Proximal gradient with Barzilai-Borwein step seeds and backtracking.

    A trial step ``s`` is accepted when
    ``F(u+) <= F(u) + <F'(u), u+ - u> + ||u+ - u||^2 / (2s)``, which makes
    ``J = F + mu j`` nonincreasing.  Stops once ``||u+ - u|| / s <= tol``.
    """
    spec = cfg.spec
    u = GridFunction.zeros(spec) if u0 is None else u0
    if np.any(u.values < cfg.alpha) or np.any(u.values > cfg.beta):
        raise ValueError("initial control must be feasible")
    if step is None:
        L = estimate_lipschitz(cfg.pde, u)
        step = 1.0 / L if L > 0 else 1.0
    st = StateTriple.build(cfg.pde, u)
    F, g = st.objective(), st.gradient()
    history = [F + cfg.mu * j_value(cfg.kind, u)]
    steps = []
    s = step
    prev = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if prev is not None:
            du = u - prev[0]
            dg = g - prev[1]
            curv = du.inner(dg)
            if curv > 0:
                s = min(max(du.inner(du) / curv, 1e-10), 1e10)
        while True:
            up = prox(cfg.kind, cfg.mu, s, u - s * g, cfg.box)
            d = up - u
            st_p = StateTriple.build(cfg.pde, up)
            Fp = st_p.objective()
            dd = d.inner(d)
            if Fp <= F + g.inner(d) + dd / (2 * s) + 1e-15 * max(1.0, abs(F)):
                break
            s *= 0.5
            if s < 1e-16:
                break
        steps.append(s)
        prev = (u, g)
        move = math.sqrt(dd) / s
        u, F, st = up, Fp, st_p
        g = st.gradient()
        history.append(F + cfg.mu * j_value(cfg.kind, u))
        if move <= tol:
            converged = True
            break
    lam = canonical_subgradient(cfg.kind, u, g, cfg.mu, cfg.box) if cfg.mu > 0 else GridFunction.zeros(spec)
    res = kkt_residual(cfg, u, lam, g)
    result = SolveResult(u, lam, g, it, res, history, steps, converged)
    log.info("solve_ocp: %d iterations, KKT residual %.3e", it, res)
    if not converged:
        raise MaxIterReached(result)
    return result
