"""Second-order quantities of ``G = indicator(Uad) + mu * j``.

Closed-form second subderivatives at first-order points, the second-order
difference quotient they are limits of, the recovery sequences realizing
those limits, and a few auxiliary analytic forms (``Theta`` for j2, the
restricted quadratic form for j3, derivatives of the time-wise L2 norm).

All quotients are evaluated from cancellation-free differences (see
:func:`sparsoc.sparsity.j_difference`) so that they stay accurate for
``t`` down to about ``1e-7``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sparsoc.cones import active_sets, certified_subgradient, critical_contains, first_order_violation
from sparsoc.errors import NotCritical, NotStationary, UnknownValue, ZeroBase
from sparsoc.fnspace import GridFunction, space_l2_profile, time_l1_profile
from sparsoc.sparsity import (
    SparsityKind,
    classify,
    j_difference,
    j_dir_deriv,
    j_omega_derivative,
    j_value,
)

DIVERGENCE_THRESHOLD = 1e12


class ExtReal(float):
    """A float in ``[-inf, inf]`` with a ``diverging`` flag.

    ``diverging`` marks finite grid values of integrals whose continuous
    counterpart may be infinite.  Addition follows ``inf + (-inf) = inf``.
    """

    def __new__(cls, value, diverging: bool = False):
        obj = super().__new__(cls, value)
        obj.diverging = bool(diverging)
        return obj

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self)

    def __add__(self, other):
        if math.isinf(self) or (isinstance(other, float) and math.isinf(other)):
            if self == math.inf or other == math.inf:
                return ExtReal(math.inf)
        return ExtReal(float(self) + float(other), self.diverging or getattr(other, "diverging", False))

    __radd__ = __add__

    def __repr__(self):
        flag = ", diverging" if self.diverging else ""
        return f"ExtReal({float(self)!r}{flag})"


INF = ExtReal(math.inf)


def _feasible(u: np.ndarray, box) -> bool:
    alpha, beta = box
    slack = 4 * np.finfo(float).eps * max(abs(alpha), abs(beta))
    return bool(np.all(u >= alpha - slack) and np.all(u <= beta + slack))


def curvature_quotient(kind, ubar: GridFunction, w: GridFunction, v: GridFunction, t: float, *, mu: float, box) -> ExtReal:
    """``[G(ubar + t v) - G(ubar) - t <w, v>] / (t^2 / 2)``."""
    if t <= 0:
        raise ValueError("t must be positive")
    if not _feasible(ubar.values + t * v.values, box):
        return INF
    num = mu * j_difference(kind, ubar, v, t) - t * w.inner(v)
    return ExtReal(num / (0.5 * t * t))


def theta_j2(ubar: GridFunction, v: GridFunction, tol: float = 1e-14) -> float:
    """``(1/j2(u)) [ int jOmega'(u(t); v(t))^2 dt - j2'(u; v)^2 ]``."""
    cls = classify(ubar)
    spec = ubar.spec
    a = time_l1_profile(cls.cleaned, spec)
    j2 = math.sqrt(float(np.sum(a * a)) * spec.cell_measure_time)
    if j2 <= tol:
        raise ZeroBase("theta_j2 requires a nonzero base point")
    d = j_omega_derivative(ubar, v, cls)
    dt = spec.cell_measure_time
    s = a / j2
    # the bracket equals ||d - <d, s> s||^2, which avoids cancellation
    proj = float(np.sum(d * s)) * dt
    r = d - proj * s
    return float(np.sum(r * r)) * dt / j2


def _j3_integrand(ubar_vals, v_vals, spec):
    """Per spatial cell ``(1/||u||)[||v||^2 - (<u,v>/||u||)^2]`` on rows with ``u != 0``."""
    dt = spec.cell_measure_time
    nu = space_l2_profile(ubar_vals, spec)
    e = ubar_vals / nu[:, None]
    proj = np.sum(e * v_vals, axis=1) * dt
    r = v_vals - proj[:, None] * e
    return np.sum(r * r, axis=1) * dt / nu, nu


def qform_j3(ubar: GridFunction, v: GridFunction, sigma: float) -> float:
    """Quadratic form of the j3 curvature restricted to ``{x : ||ubar(x)|| >= sigma}``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    spec = ubar.spec
    nu = space_l2_profile(ubar.values, spec)
    rows = nu >= sigma
    if not np.any(rows):
        return 0.0
    dens, _ = _j3_integrand(ubar.values[rows], v.values[rows], spec)
    return float(np.sum(dens)) * spec.cell_measure_space


def _require_stationary(kind, ubar, gradF, lam, mu, box, tol):
    scale = max(1.0, gradF.max_abs(), mu * lam.max_abs())
    fo = first_order_violation(kind, ubar, gradF, lam, mu, box)
    if fo > tol * scale:
        raise NotStationary("base point is not a first-order point", fo)


def second_subderivative(kind, ubar: GridFunction, gradF: GridFunction, lam: GridFunction, v: GridFunction,
                         *, mu: float, box, tol: float = 1e-8) -> ExtReal:
    """Closed-form ``G''(ubar, -F'(ubar); v)`` at a first-order point."""
    kind = SparsityKind.parse(kind)
    _require_stationary(kind, ubar, gradF, lam, mu, box, tol)
    if not critical_contains(kind, ubar, gradF, lam, v, tol, mu=mu, box=box).member:
        return INF
    cls = classify(ubar)
    if kind is SparsityKind.J1:
        return ExtReal(0.0)
    if kind is SparsityKind.J2:
        if cls.is_zero:
            raise UnknownValue("second subderivative of G2 at ubar = 0 is not available in closed form")
        return ExtReal(mu * theta_j2(ubar, v))
    if cls.is_zero:
        return ExtReal(0.0)
    act = cls.space_active
    dens, _ = _j3_integrand(cls.cleaned[act], v.values[act], ubar.spec)
    value = mu * float(np.sum(dens)) * ubar.spec.cell_measure_space
    return ExtReal(value, diverging=bool(np.any(dens > DIVERGENCE_THRESHOLD)))


# ---------------------------------------------------------------------------
# recovery sequences


def _band_mask(ubar: GridFunction, box, t: float) -> np.ndarray:
    """Cells with ``ubar`` strictly inside a sqrt(t)-band at a bound or at zero."""
    cls = classify(ubar)
    lo, hi = active_sets(ubar, box)
    u = ubar.values
    alpha, beta = box
    r = math.sqrt(t)
    band = (~lo & (u < alpha + r)) | (~hi & (u > beta - r))
    band |= (cls.sign != 0) & (np.abs(u) < r)
    return band


def recovery_sequence(kind, ubar: GridFunction, v: GridFunction, t: float, gradF: GridFunction, lam: GridFunction,
                      *, mu: float, box, tol: float = 1e-8) -> GridFunction:
    """Direction ``v_t`` approximating ``v`` that attains the second subderivative."""
    kind = SparsityKind.parse(kind)
    if not critical_contains(kind, ubar, gradF, lam, v, tol, mu=mu, box=box).member:
        raise NotCritical("recovery sequences are defined for critical directions only")
    spec = ubar.spec
    r = math.sqrt(t)
    vv = v.values
    out = np.where(_band_mask(ubar, box, t), 0.0, np.clip(vv, -1.0 / r, 1.0 / r))
    if kind is SparsityKind.J3:
        cls = classify(ubar)
        nu = space_l2_profile(cls.cleaned, spec)
        act = cls.space_active
        out[act & (nu < r)] = 0.0
        zero_rows = ~act
        nv = space_l2_profile(vv, spec)
        out[zero_rows] = np.where((nv[zero_rows] > 1.0 / r)[:, None], 0.0, vv[zero_rows])
    return GridFunction(spec, out)


@dataclass
class RecoveryCheck:
    t: float
    dominated: bool  # |v_t| <= |v| with matching signs, which drives v_t -> v
    distance: float  # ||v_t - v||
    critical: bool
    feasible: bool
    identity: bool
    identity_residual: float
    quotient: float

    @property
    def all_hold(self) -> bool:
        return self.dominated and self.critical and self.feasible and self.identity


IDENTITY_TOL = 1e-10


def _identity_residual(kind, ubar: GridFunction, vt: GridFunction, t: float) -> float:
    """Residual of the exact first-order identity a recovery sequence must satisfy.

    The left-hand side is evaluated by plain subtraction of function values.
    """
    spec = ubar.spec
    cls = classify(ubar)
    u, w = ubar.values, vt.values
    if kind is SparsityKind.J1:
        lhs = j_value(kind, ubar + t * vt) - j_value(kind, ubar)
        return abs(lhs - t * j_dir_deriv(kind, ubar, vt, cls))
    if kind is SparsityKind.J2:
        lhs = time_l1_profile(u + t * w, spec) - time_l1_profile(u, spec)
        rhs = t * j_omega_derivative(ubar, vt, cls)
        return float(np.max(np.abs(lhs - rhs)))
    n0 = space_l2_profile(u, spec)
    n1 = space_l2_profile(u + t * w, spec)
    lhs = n1 - n0
    act = cls.space_active
    rhs = np.empty_like(lhs)
    K = n1[act] + n0[act]
    rhs[act] = t * np.sum(2 * u[act] * w[act] + t * w[act] ** 2, axis=1) * spec.cell_measure_time / K
    rhs[~act] = t * space_l2_profile(w[~act], spec)
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


def check_recovery_properties(kind, ubar: GridFunction, v: GridFunction, t: float, gradF: GridFunction,
                              lam: GridFunction, *, mu: float, box, tol: float = 1e-8) -> RecoveryCheck:
    kind = SparsityKind.parse(kind)
    vt = recovery_sequence(kind, ubar, v, t, gradF, lam, mu=mu, box=box, tol=tol)
    a, b = vt.values, v.values
    dominated = bool(np.all(np.abs(a) <= np.abs(b)) and np.all(a * b >= 0))
    alpha, beta = box
    shifted = ubar.values + t * a
    feasible = bool(np.all(shifted >= alpha) and np.all(shifted <= beta))
    critical = critical_contains(kind, ubar, gradF, lam, vt, tol, mu=mu, box=box).member
    res = _identity_residual(kind, ubar, vt, t)
    w = certified_subgradient(ubar, gradF, lam, mu, box)
    q = curvature_quotient(kind, ubar, w, vt, t, mu=mu, box=box)
    return RecoveryCheck(
        t=t,
        dominated=dominated,
        distance=(vt - v).norm(),
        critical=critical,
        feasible=feasible,
        identity=res <= IDENTITY_TOL,
        identity_residual=res,
        quotient=float(q),
    )


def t_schedule(k_max: int = 12, base: float = 4.0) -> np.ndarray:
    return base ** -np.arange(1, k_max + 1, dtype=float)


# ---------------------------------------------------------------------------
# time-wise L2 norm and the lower Taylor expansion of j2


def psi_eval(f, g, dt: float = 1.0, tol: float = 1e-14):
    """``(Psi(f), Psi'(f)g, Psi''(f)g^2, Psi'''(f)g^3)`` for ``Psi = ||.||_{L2(0,T)}``.

    ``f`` and ``g`` are time profiles on cells of width ``dt``.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    nf = math.sqrt(float(np.dot(f, f)) * dt)
    if nf <= tol:
        raise ZeroBase("Psi derivatives require f != 0")
    fg = float(np.dot(f, g)) * dt
    gg = float(np.dot(g, g)) * dt
    e = f / nf
    r = g - (fg / nf) * e
    perp = float(np.dot(r, r)) * dt  # ||g||^2 - <f,g>^2/||f||^2 without cancellation
    d1 = fg / nf
    d2 = perp / nf
    d3 = -3.0 * fg * perp / nf**3
    return nf, d1, d2, d3


def psi_third_bound(f, g, dt: float = 1.0) -> float:
    nf2 = float(np.dot(f, f)) * dt
    ng = math.sqrt(float(np.dot(g, g)) * dt)
    return 6.0 * ng**3 / nf2


def lower_taylor_residual_j2(ubar: GridFunction, v: GridFunction) -> tuple[float, float]:
    """Gap ``j2(u+v) - j2(u) - j2'(u;v) - Theta(u,v)/2`` and the fitted constant.

    The fitted constant is ``max(0, -gap) * j2(u)^2 / ||v||^3``, the smallest
    ``C`` for which the cubic lower bound holds at this ``v``.
    """
    cls = classify(ubar)
    if cls.is_zero:
        raise ZeroBase("lower Taylor expansion requires ubar != 0")
    kind = SparsityKind.J2
    theta = theta_j2(ubar, v)
    gap = j_difference(kind, ubar, v, 1.0) - j_dir_deriv(kind, ubar, v, cls) - 0.5 * theta
    nv = v.norm()
    if nv == 0:
        return 0.0, 0.0
    j2 = j_value(kind, ubar)
    return gap, max(0.0, -gap) * j2 * j2 / nv**3
