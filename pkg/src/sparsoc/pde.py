"""Semilinear parabolic control-to-state map and the smooth tracking objective.

State equation on ``Omega x (0, T)`` with homogeneous Dirichlet data::

    dy/dt - kappa * Laplace(y) + a(y) = u,      y(0) = y0

Space: cell-centred finite differences (the boundary ghost value is the
negated interior value, so boundary rows read ``(-3 y_0 + y_1) / h^2``).
Time: implicit Euler; the value stored in time cell ``j`` is the state at
the end of that cell, so ``u`` and ``y`` share one grid.

The adjoint is the exact transpose of the discrete linearized solver, so the
gradient of the discrete objective is exact up to linear-solve roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from sparsoc.errors import NewtonDiverged, SingularSystem
from sparsoc.fnspace import GridFunction, GridSpec


def _a_none(y):
    return np.zeros_like(y), np.zeros_like(y), np.zeros_like(y)


def _a_cubic(y):
    return y**3, 3 * y**2, 6 * y


def _a_linear_cubic(y):
    return y + y**3, 1 + 3 * y**2, 6 * y


NONLINEARITIES = {"none": _a_none, "cubic": _a_cubic, "linear_cubic": _a_linear_cubic}


def dirichlet_laplacian(spec: GridSpec, kappa: float = 1.0) -> sp.csc_matrix:
    """Matrix of ``-kappa * Laplace`` on the flattened spatial cells."""
    mats = []
    for n, h in zip(spec.spatial_cells, spec.spatial_widths):
        main = np.full(n, 2.0)
        main[0] = main[-1] = 3.0
        if n == 1:
            main[0] = 4.0
        off = -np.ones(n - 1)
        mats.append(sp.diags([off, main, off], [-1, 0, 1]) / h**2)
    if len(mats) == 1:
        A = mats[0]
    else:
        A = sp.kron(mats[0], sp.identity(spec.spatial_cells[1])) + sp.kron(sp.identity(spec.spatial_cells[0]), mats[1])
    return (kappa * A).tocsc()


@dataclass(frozen=True)
class PdeConfig:
    spec: GridSpec
    y_d: GridFunction
    y0: np.ndarray = None
    kappa: float = 1.0
    nonlinearity: str = "none"
    nu: float = 1.0
    newton_tol: float = 1e-13
    newton_max_iter: int = 50
    scheme: str = "implicit-euler"

    def __post_init__(self):
        y0 = np.zeros(self.spec.n_space) if self.y0 is None else np.asarray(self.y0, dtype=float).ravel()
        if y0.shape != (self.spec.n_space,):
            raise ValueError("y0 must have one value per spatial cell")
        if not np.all(np.isfinite(y0)):
            raise ValueError("y0 must be finite")
        y0.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        if self.y_d.spec != self.spec:
            raise ValueError("y_d lives on a different grid")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"nonlinearity must be one of {sorted(NONLINEARITIES)}")
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.scheme != "implicit-euler":
            raise ValueError("only the implicit-euler scheme is available")

    @cached_property
    def laplacian(self):
        return dirichlet_laplacian(self.spec, self.kappa)

    def a(self, y):
        return NONLINEARITIES[self.nonlinearity](y)


def _factor(M):
    try:
        lu = spla.splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    return lu


def _check_u(cfg, u):
    if u.spec != cfg.spec:
        raise ValueError("control lives on a different grid")


def solve_state(cfg: PdeConfig, u: GridFunction) -> GridFunction:
    return StateTriple.build(cfg, u).y


class StateTriple:
    """State, adjoint and per-step factorizations for one control ``u``."""

    def __init__(self, cfg: PdeConfig, u: GridFunction, y: np.ndarray, lus: list):
        self.cfg = cfg
        self.u = u
        self._y = y
        self._lus = lus  # factorization of I/dt + A + diag(a'(y_j)) per time step
        self._phi = None

    @classmethod
    def build(cls, cfg: PdeConfig, u: GridFunction) -> "StateTriple":
        _check_u(cfg, u)
        spec = cfg.spec
        dt = spec.cell_measure_time
        A = cfg.laplacian
        I = sp.identity(spec.n_space, format="csc")
        M0 = (I / dt + A).tocsc()
        y = np.empty(spec.shape)
        lus = []
        prev = cfg.y0
        linear = cfg.nonlinearity == "none"
        lu0 = _factor(M0) if linear else None
        for j in range(spec.time_cells):
            rhs = prev / dt + u.values[:, j]
            if linear:
                cur = lu0.solve(rhs)
                lus.append(lu0)
            else:
                cur, lu = _newton_step(cfg, M0, rhs, prev, j)
                lus.append(lu)
            y[:, j] = cur
            prev = cur
        return cls(cfg, u, y, lus)

    @property
    def y(self) -> GridFunction:
        return GridFunction(self.cfg.spec, self._y)

    def linearized(self, v: GridFunction) -> GridFunction:
        """``z_v``: solve ``M_j z_j = z_{j-1}/dt + v_j`` with ``z_{-1} = 0``."""
        spec = self.cfg.spec
        dt = spec.cell_measure_time
        z = np.empty(spec.shape)
        prev = np.zeros(spec.n_space)
        for j in range(spec.time_cells):
            prev = self._lus[j].solve(prev / dt + v.values[:, j])
            z[:, j] = prev
        return GridFunction(spec, z)

    def adjoint_apply(self, g: np.ndarray) -> np.ndarray:
        """Transpose of the linearized solver: ``M_j p_j = g_j + p_{j+1}/dt``, ``p_nt = 0``."""
        spec = self.cfg.spec
        dt = spec.cell_measure_time
        p = np.empty(spec.shape)
        nxt = np.zeros(spec.n_space)
        for j in range(spec.time_cells - 1, -1, -1):
            nxt = self._lus[j].solve(g[:, j] + nxt / dt)
            p[:, j] = nxt
        return p

    @property
    def phi(self) -> GridFunction:
        if self._phi is None:
            self._phi = self.adjoint_apply(self._y - self.cfg.y_d.values)
        return GridFunction(self.cfg.spec, self._phi)

    def objective(self) -> float:
        r = self._y - self.cfg.y_d.values
        return 0.5 * float(np.sum(r * r)) * self.cfg.spec.cell_measure + 0.5 * self.cfg.nu * self.u.inner(self.u)

    def gradient(self) -> GridFunction:
        return self.phi + self.cfg.nu * self.u

    def curvature_weight(self) -> np.ndarray:
        """``1 - phi * a''(y)``, the second derivative of the Lagrangian in ``y``."""
        _, _, d2 = self.cfg.a(self._y)
        return 1.0 - self.phi.values * d2

    def hessian(self, v1: GridFunction, v2: GridFunction) -> float:
        z1 = self.linearized(v1)
        z2 = z1 if v2 is v1 else self.linearized(v2)
        w = self.curvature_weight()
        return float(np.sum(w * z1.values * z2.values)) * self.cfg.spec.cell_measure + self.cfg.nu * v1.inner(v2)

    def hessian_vector(self, v: GridFunction) -> GridFunction:
        """Riesz representative of ``F''(u)(v, .)`` in ``L2``."""
        z = self.linearized(v)
        return GridFunction(self.cfg.spec, self.adjoint_apply(self.curvature_weight() * z.values)) + self.cfg.nu * v


def _newton_step(cfg, M0, rhs, guess, step):
    y = guess.copy()
    scale = max(1.0, float(np.max(np.abs(rhs))))
    for _ in range(cfg.newton_max_iter):
        ay, day, _ = cfg.a(y)
        res = M0 @ y + ay - rhs
        rn = float(np.max(np.abs(res)))
        if not math.isfinite(rn):
            raise NewtonDiverged(step, rn)
        lu = _factor(M0 + sp.diags(day))
        if rn <= cfg.newton_tol * scale:
            return y, lu
        y = y - lu.solve(res)
    ay, day, _ = cfg.a(y)
    rn = float(np.max(np.abs(M0 @ y + ay - rhs)))
    if rn <= cfg.newton_tol * scale * 100:
        return y, _factor(M0 + sp.diags(day))
    raise NewtonDiverged(step, rn)


def solve_linearized(cfg: PdeConfig, y: GridFunction, v: GridFunction) -> GridFunction:
    """Linearized state ``z_v`` around the state trajectory ``y``."""
    return _from_state(cfg, y).linearized(v)


def solve_adjoint(cfg: PdeConfig, y: GridFunction) -> GridFunction:
    """Adjoint state for the tracking objective around the trajectory ``y``."""
    return _from_state(cfg, y).phi


def _from_state(cfg, y: GridFunction) -> StateTriple:
    spec = cfg.spec
    dt = spec.cell_measure_time
    I = sp.identity(spec.n_space, format="csc")
    M0 = I / dt + cfg.laplacian
    if cfg.nonlinearity == "none":
        lu = _factor(M0)
        lus = [lu] * spec.time_cells
    else:
        _, day, _ = cfg.a(y.values)
        lus = [_factor(M0 + sp.diags(day[:, j])) for j in range(spec.time_cells)]
    return StateTriple(cfg, GridFunction.zeros(spec), y.values, lus)


def objective_smooth(cfg: PdeConfig, u: GridFunction) -> float:
    return StateTriple.build(cfg, u).objective()


def grad_smooth(cfg: PdeConfig, u: GridFunction) -> GridFunction:
    return StateTriple.build(cfg, u).gradient()


def hess_apply(cfg: PdeConfig, u: GridFunction, v1: GridFunction, v2: GridFunction) -> float:
    return StateTriple.build(cfg, u).hessian(v1, v2)


def estimate_cz(cfg: PdeConfig, u: GridFunction | None = None, iters: int = 30, seed=0) -> float:
    """Operator norm of ``v -> z_v`` in ``L2`` by power iteration on ``S* S``."""
    spec = cfg.spec
    st = StateTriple.build(cfg, u if u is not None else GridFunction.zeros(spec))
    rng = np.random.default_rng(seed)
    v = GridFunction(spec, rng.standard_normal(spec.shape))
    v = v / v.norm()
    est = 0.0
    for _ in range(iters):
        z = st.linearized(v)
        w = GridFunction(spec, st.adjoint_apply(z.values))
        est = math.sqrt(max(v.inner(w), 0.0))
        n = w.norm()
        if n == 0:
            return 0.0
        v = w / n
    return est


def estimate_lipschitz(cfg: PdeConfig, u: GridFunction, iters: int = 20, seed=0) -> float:
    """Largest eigenvalue magnitude of ``F''(u)`` by power iteration."""
    spec = cfg.spec
    st = StateTriple.build(cfg, u)
    rng = np.random.default_rng(seed)
    v = GridFunction(spec, rng.standard_normal(spec.shape))
    v = v / v.norm()
    lam = 0.0
    for _ in range(iters):
        hv = st.hessian_vector(v)
        lam = hv.norm()
        if lam == 0:
            return 0.0
        v = hv / lam
    return lam
