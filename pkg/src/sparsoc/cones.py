"""Box geometry: projection, tangent and normal cones, critical directions.

The admissible set is ``Uad = {alpha <= u <= beta}`` with constants
``alpha < 0 < beta``.  A cell of ``ubar`` counts as active at a bound when it
is within ``1e-10 * (beta - alpha)`` of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sparsoc.errors import InfeasibleBase, NotStationary
from sparsoc.fnspace import GridFunction, space_l2_profile, time_l1_profile
from sparsoc.sparsity import (
    SparsityKind,
    classify,
    j_dir_deriv,
    pairing_equals_dirderiv,
    subdiff_violation,
)

ACTIVE_RTOL = 1e-10


@dataclass
class ConeReport:
    """Outcome of a cone membership test.

    ``violation_measure`` is the space-time measure of the cells that break
    the pointwise conditions; ``worst_cell`` is ``(index, value)`` of the
    largest violation or ``None``.  Scalar conditions that are not attached
    to a cell are listed in ``conditions``.
    """

    member: bool
    violation_measure: float
    worst_cell: tuple | None = None
    conditions: dict = field(default_factory=dict)

    def __bool__(self):
        return self.member


def _check_box(box):
    alpha, beta = box
    if not alpha < 0 < beta:
        raise ValueError(f"box must satisfy alpha < 0 < beta, got ({alpha}, {beta})")
    return float(alpha), float(beta)


def project_box(u: GridFunction, alpha: float, beta: float) -> GridFunction:
    _check_box((alpha, beta))
    return u.with_values(np.clip(u.values, alpha, beta))


def active_sets(ubar: GridFunction, box, tol: float | None = None):
    """Boolean masks ``(at_lower, at_upper)``; raises if ``ubar`` is infeasible."""
    alpha, beta = _check_box(box)
    if tol is None:
        tol = ACTIVE_RTOL * (beta - alpha)
    u = ubar.values
    excess = max(float(np.max(alpha - u)), float(np.max(u - beta)), 0.0)
    if excess > tol:
        raise InfeasibleBase(f"base point violates the box by {excess:.3e}")
    return u <= alpha + tol, u >= beta - tol


def _report(viol: np.ndarray, spec, tol: float, conditions=None) -> ConeReport:
    bad = viol > tol
    measure = float(np.count_nonzero(bad)) * spec.cell_measure
    worst = None
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
        worst = (tuple(int(i) for i in idx), float(viol[idx]))
    conditions = dict(conditions or {})
    member = measure == 0.0 and all(conditions.values())
    return ConeReport(member, measure, worst, conditions)


def tangent_violation(ubar, v, box, tol=None) -> np.ndarray:
    lo, hi = active_sets(ubar, box, tol)
    vv = v.values
    return np.where(lo, np.maximum(-vv, 0.0), 0.0) + np.where(hi, np.maximum(vv, 0.0), 0.0)


def tangent_contains(ubar: GridFunction, v: GridFunction, box, tol: float = 1e-10) -> ConeReport:
    """``v >= 0`` where ``ubar = alpha`` and ``v <= 0`` where ``ubar = beta``."""
    return _report(tangent_violation(ubar, v, box), ubar.spec, tol)


def normal_violation(ubar, w, box, tol=None) -> np.ndarray:
    lo, hi = active_sets(ubar, box, tol)
    ww = w.values
    return np.where(lo, np.maximum(ww, 0.0), np.where(hi, np.maximum(-ww, 0.0), np.abs(ww)))


def normal_contains(ubar: GridFunction, w: GridFunction, box, tol: float = 1e-10) -> ConeReport:
    """``w <= 0`` at ``alpha``, ``w >= 0`` at ``beta`` and ``w = 0`` in between."""
    return _report(normal_violation(ubar, w, box), ubar.spec, tol)


def project_normal(ubar: GridFunction, w: GridFunction, box) -> GridFunction:
    """Pointwise projection of ``w`` onto the normal cone of the box at ``ubar``."""
    lo, hi = active_sets(ubar, box)
    ww = w.values
    return w.with_values(np.where(lo, np.minimum(ww, 0.0), np.where(hi, np.maximum(ww, 0.0), 0.0)))


def certified_subgradient(ubar: GridFunction, gradF: GridFunction, lam: GridFunction, mu: float, box) -> GridFunction:
    """Element ``mu*lam + P_N(-gradF - mu*lam)`` of the composite subdifferential.

    It lies in ``dG(ubar)`` whenever ``lam`` lies in ``dj(ubar)`` and equals
    ``-gradF`` exactly at a first-order point.
    """
    return mu * lam + project_normal(ubar, -(gradF + mu * lam), box)


def first_order_violation(kind, ubar, gradF, lam, mu, box) -> float:
    """Largest pointwise violation of ``lam in dj(ubar)`` and ``-(F' + mu lam) in N(ubar)``."""
    sv, _ = subdiff_violation(kind, ubar, lam)
    nv = normal_violation(ubar, -(gradF + mu * lam), box)
    return float(max(np.max(sv), np.max(nv)))


def critical_contains(kind, ubar: GridFunction, gradF: GridFunction, lam: GridFunction, v: GridFunction,
                      tol: float = 1e-8, *, mu: float, box) -> ConeReport:
    """Membership of ``v`` in the critical cone at a first-order point.

    Pointwise: ``v`` tangent and ``(F' + mu lam) v = 0``.  Scalar:
    ``j'(ubar; v) = <lam, v>``.  The identity ``F'v + mu j'(ubar; v) = 0`` is
    recorded as a cross-check.
    """
    kind = SparsityKind.parse(kind)
    scale = max(1.0, gradF.max_abs(), mu * lam.max_abs())
    fo = first_order_violation(kind, ubar, gradF, lam, mu, box)
    if fo > tol * scale:
        raise NotStationary("base point is not a first-order point", fo)
    r = (gradF + mu * lam).values
    viol = tangent_violation(ubar, v, box) + np.abs(r * v.values)
    vscale = max(1.0, v.max_abs())
    pairing = pairing_equals_dirderiv(kind, ubar, lam, v, tol=tol)
    dd = j_dir_deriv(kind, ubar, v)
    identity = abs(gradF.inner(v) + mu * dd)
    conditions = {
        "pairing": pairing,
        "identity": identity <= tol * scale * vscale * max(1.0, ubar.spec.total_measure),
    }
    rep = _report(viol, ubar.spec, tol * scale * vscale, conditions)
    rep.conditions["identity_residual"] = identity
    rep.member = rep.member and conditions["identity"]
    return rep


def sample_critical(kind, ubar: GridFunction, gradF: GridFunction, lam: GridFunction, count: int,
                    seed=None, *, mu: float, box, tol: float = 1e-8) -> list[GridFunction]:
    """Random unit-norm directions from the critical cone.

    Cells where ``F' + mu lam`` is nonzero are zeroed, tangent signs are
    enforced at active bounds, and on the zero set of ``ubar`` the direction
    is aligned with ``lam`` wherever the subdifferential characterization
    allows a nonzero value.  Returns an empty list if the cone is ``{0}``.
    """
    kind = SparsityKind.parse(kind)
    rng = np.random.default_rng(seed)
    spec = ubar.spec
    cls = classify(ubar)
    lo, hi = active_sets(ubar, box)
    scale = max(1.0, gradF.max_abs(), mu * lam.max_abs())
    free = np.abs((gradF + mu * lam).values) <= tol * scale
    L = lam.values
    ltol = 1e-10

    # sign constraint per cell: +1 => v >= 0, -1 => v <= 0, 0 => unconstrained
    sign = np.zeros(spec.shape, dtype=int)
    sign[lo] = 1
    sign[hi] = -1
    zero = cls.sign == 0
    group = None  # j3 zero slices and j2 at ubar = 0 need structured draws

    if kind is SparsityKind.J1:
        aligned = zero & (np.abs(np.abs(L) - 1.0) <= ltol)
        free &= ~zero | aligned
        sign = np.where(zero, np.sign(L).astype(int), sign)
    elif kind is SparsityKind.J2 and not cls.is_zero:
        a = time_l1_profile(cls.cleaned, spec)
        s = (a / np.sqrt(np.sum(a * a) * spec.cell_measure_time))[None, :]
        aligned = zero & (np.abs(np.abs(L) - s) <= ltol * np.maximum(s, 1.0)) & (s > 0)
        free &= ~zero | aligned
        sign = np.where(zero, np.sign(L).astype(int), sign)
    elif kind is SparsityKind.J2:
        m = np.max(np.abs(L), axis=0)
        on_sphere = abs(np.sqrt(np.sum(m * m) * spec.cell_measure_time) - 1.0) <= ltol
        argmax = (np.abs(L) >= m[None, :] - ltol) & (m[None, :] > 0)
        free &= argmax & on_sphere
        group = "j2-zero"
    else:
        nz = space_l2_profile(L, spec)
        unit = np.abs(nz - 1.0) <= ltol
        slice_free = ~cls.space_active & unit & np.all(free, axis=1)
        free[~cls.space_active] = False
        free[slice_free] = True
        group = "j3-zero"

    if not np.any(free):
        return []
    out = []
    for _ in range(count):
        v = rng.standard_normal(spec.shape)
        v = np.where(sign > 0, np.abs(v), np.where(sign < 0, -np.abs(v), v))
        if group == "j2-zero":
            # per slice: mass m_t spread over argmax cells with the sign of lam
            w = np.where(free, rng.random(spec.shape) + 0.05, 0.0)
            mass = np.sum(w, axis=0) * spec.cell_measure_space
            with np.errstate(invalid="ignore", divide="ignore"):
                v = np.where(mass[None, :] > 0, w * m[None, :] / mass[None, :], 0.0) * np.sign(L)
        elif group == "j3-zero":
            zs = ~cls.space_active
            c = rng.random(spec.n_space) + 0.05
            v[zs] = np.where(free[zs], c[zs, None] * L[zs], 0.0)
        v = np.where(free, v, 0.0)
        f = GridFunction(spec, v)
        n = f.norm()
        if n == 0.0:
            continue
        out.append(f / n)
    return out
