"""The sparsity functionals j1, j2, j3 on grid functions.

    j1(u) = int |u|                                   (L1(Omega_T))
    j2(u) = ( int_0^T ||u(., t)||_{L1(Omega)}^2 dt )^(1/2)   (L2(0,T; L1(Omega)))
    j3(u) = int_Omega ||u(x, .)||_{L2(0,T)} dx           (L1(Omega; L2(0,T)))

All formulas are evaluated exactly for piecewise-constant functions, so sign
sets such as ``{u = 0}`` are sets of cells.  Whether a cell counts as zero is
decided by :func:`classify` with the tolerance ``1e-12 * max(1, ||u||_inf)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from sparsoc.errors import DegenerateCase, InconsistentCharacterization, ProxNoConvergence
from sparsoc.fnspace import GridFunction, GridSpec, space_l2_profile, time_l1_profile

ZERO_RTOL = 1e-12


class SparsityKind(enum.Enum):
    J1 = "j1"
    J2 = "j2"
    J3 = "j3"

    @classmethod
    def parse(cls, value) -> "SparsityKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown sparsity kind {value!r}; expected j1, j2 or j3") from None


@dataclass(frozen=True)
class SignClassification:
    """Sign pattern of a base point ``ubar``.

    ``sign`` is +1/-1/0 per cell, ``space_active`` marks spatial cells with
    ``||ubar(x, .)|| != 0`` (the set Omega_ubar), ``time_active`` marks time
    cells with ``||ubar(., t)||_{L1} != 0`` (the set M).
    """

    sign: np.ndarray
    space_active: np.ndarray
    time_active: np.ndarray
    tol: float
    cleaned: np.ndarray = field(repr=False)

    @property
    def is_zero(self) -> bool:
        return not bool(np.any(self.sign))


def zero_tolerance(values: np.ndarray) -> float:
    return ZERO_RTOL * max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)


def classify(u: GridFunction, tol: float | None = None) -> SignClassification:
    vals = u.values
    if tol is None:
        tol = zero_tolerance(vals)
    sign = np.where(vals > tol, 1, np.where(vals < -tol, -1, 0)).astype(np.int8)
    cleaned = np.where(sign != 0, vals, 0.0)
    return SignClassification(
        sign=sign,
        space_active=np.any(sign != 0, axis=1),
        time_active=np.any(sign != 0, axis=0),
        tol=tol,
        cleaned=cleaned,
    )


def _vals(u):
    return u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)


# ---------------------------------------------------------------------------
# values and directional derivatives


def j_value(kind, u: GridFunction) -> float:
    kind = SparsityKind.parse(kind)
    spec = u.spec
    v = u.values
    if kind is SparsityKind.J1:
        return float(np.sum(np.abs(v))) * spec.cell_measure
    if kind is SparsityKind.J2:
        a = time_l1_profile(v, spec)
        return math.sqrt(float(np.sum(a * a)) * spec.cell_measure_time)
    return float(np.sum(space_l2_profile(v, spec))) * spec.cell_measure_space


def _local_l1_derivative(sign: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Pointwise density of the directional derivative of |.|."""
    return np.where(sign != 0, sign * v, np.abs(v))


def j_omega_derivative(ubar: GridFunction, v: GridFunction, cls: SignClassification | None = None) -> np.ndarray:
    """t -> j_Omega'(ubar(t); v(t)), the derivative of the spatial L1 norm per slice."""
    cls = cls or classify(ubar)
    return np.sum(_local_l1_derivative(cls.sign, v.values), axis=0) * ubar.spec.cell_measure_space


def j_dir_deriv(kind, ubar: GridFunction, v: GridFunction, cls: SignClassification | None = None) -> float:
    """Closed-form directional derivative ``j'(ubar; v)``."""
    kind = SparsityKind.parse(kind)
    cls = cls or classify(ubar)
    spec = ubar.spec
    vv = v.values
    if kind is SparsityKind.J1:
        return float(np.sum(_local_l1_derivative(cls.sign, vv))) * spec.cell_measure
    if kind is SparsityKind.J2:
        if cls.is_zero:
            return j_value(kind, v)
        a = time_l1_profile(cls.cleaned, spec)
        j2 = math.sqrt(float(np.sum(a * a)) * spec.cell_measure_time)
        d = j_omega_derivative(ubar, v, cls)
        return float(np.sum(d * a)) * spec.cell_measure_time / j2
    # J3
    ub = cls.cleaned
    act = cls.space_active
    total = 0.0
    if np.any(~act):
        total += float(np.sum(space_l2_profile(vv[~act], spec)))
    if np.any(act):
        nu = space_l2_profile(ub[act], spec)
        total += float(np.sum(np.sum(ub[act] * vv[act], axis=1) * spec.cell_measure_time / nu))
    return total * spec.cell_measure_space


def j_difference(kind, ubar: GridFunction, v: GridFunction, t: float) -> float:
    """``j(ubar + t v) - j(ubar)`` evaluated without catastrophic cancellation.

    Uses ``|a + b| - |a| = b (2a + b) / (|a + b| + |a|)`` cell by cell and the
    analogous identity for the outer norms.
    """
    kind = SparsityKind.parse(kind)
    spec = ubar.spec
    a = ubar.values
    b = t * v.values
    if kind is SparsityKind.J1 or kind is SparsityKind.J2:
        denom = np.abs(a + b) + np.abs(a)
        with np.errstate(invalid="ignore", divide="ignore"):
            cell = np.where(denom > 0, b * (2 * a + b) / denom, 0.0)
        if kind is SparsityKind.J1:
            return float(np.sum(cell)) * spec.cell_measure
        da = np.sum(cell, axis=0) * spec.cell_measure_space
        a0 = time_l1_profile(a, spec)
        a1 = time_l1_profile(a + b, spec)
        n0 = math.sqrt(float(np.sum(a0 * a0)) * spec.cell_measure_time)
        n1 = math.sqrt(float(np.sum(a1 * a1)) * spec.cell_measure_time)
        if n0 + n1 == 0:
            return 0.0
        return float(np.sum(da * (a0 + a1))) * spec.cell_measure_time / (n0 + n1)
    dt = spec.cell_measure_time
    n0 = space_l2_profile(a, spec)
    n1 = space_l2_profile(a + b, spec)
    num = np.sum(b * (2 * a + b), axis=1) * dt
    denom = n0 + n1
    with np.errstate(invalid="ignore", divide="ignore"):
        per_x = np.where(denom > 0, num / denom, 0.0)
    return float(np.sum(per_x)) * spec.cell_measure_space


# ---------------------------------------------------------------------------
# subgradients


def _j2_slice_weights(cls: SignClassification, spec: GridSpec) -> np.ndarray:
    a = time_l1_profile(cls.cleaned, spec)
    j2 = math.sqrt(float(np.sum(a * a)) * spec.cell_measure_time)
    return a / j2


def l2_linf_norm(lam: GridFunction) -> float:
    """Norm of L2(0,T; Linf(Omega)), the dual norm of j2."""
    m = np.max(np.abs(lam.values), axis=0)
    return math.sqrt(float(np.sum(m * m)) * lam.spec.cell_measure_time)


def canonical_subgradient(kind, ubar: GridFunction, residual: GridFunction, mu: float, box=None) -> GridFunction:
    """Subgradient ``lam in dj(ubar)`` matching the first-order condition.

    On cells where ``dj(ubar)`` is single valued the determined value is
    returned; elsewhere ``-residual / mu`` is projected onto the admissible
    set.  ``residual`` is ``F'(ubar)``.
    """
    kind = SparsityKind.parse(kind)
    cls = classify(ubar)
    spec = ubar.spec
    r = -residual.values / mu
    if kind is SparsityKind.J1:
        lam = np.where(cls.sign != 0, cls.sign, np.clip(r, -1.0, 1.0))
        return GridFunction(spec, lam)
    if kind is SparsityKind.J2:
        if cls.is_zero:
            cand = GridFunction(spec, r)
            nrm = l2_linf_norm(cand)
            if nrm > 1.0 + 1e-12:
                raise DegenerateCase(
                    f"||-F'/mu||_(L2 Linf) = {nrm:.6g} > 1: no subgradient of j2 at 0 fits the residual",
                    candidate=cand / nrm,
                )
            return cand
        s = _j2_slice_weights(cls, spec)[None, :]
        lam = np.where(cls.sign != 0, cls.sign * s, np.clip(r, -s, s))
        return GridFunction(spec, lam)
    # J3
    ub = cls.cleaned
    lam = np.empty(spec.shape)
    act = cls.space_active
    if np.any(act):
        lam[act] = ub[act] / space_l2_profile(ub[act], spec)[:, None]
    if np.any(~act):
        rn = space_l2_profile(r[~act], spec)
        lam[~act] = r[~act] / np.maximum(1.0, rn)[:, None]
    return GridFunction(spec, lam)


@dataclass
class SubdiffReport:
    ok: bool
    max_violation: float
    cells: list = field(default_factory=list)
    region: str = ""

    def __bool__(self):
        return self.ok


def _violating_cells(mask: np.ndarray, limit: int = 50) -> list:
    idx = np.argwhere(mask)
    return [tuple(int(i) for i in row) for row in idx[:limit]]


def subdiff_violation(kind, ubar: GridFunction, lam: GridFunction) -> tuple[np.ndarray, str]:
    """Per-cell violation of ``lam in dj(ubar)`` (0 where satisfied)."""
    kind = SparsityKind.parse(kind)
    cls = classify(ubar)
    spec = ubar.spec
    L = lam.values
    if kind is SparsityKind.J1:
        viol = np.where(cls.sign != 0, np.abs(L - cls.sign), np.maximum(np.abs(L) - 1.0, 0.0))
        return viol, "sign"
    if kind is SparsityKind.J2:
        if cls.is_zero:
            excess = max(l2_linf_norm(lam) - 1.0, 0.0)
            m = np.max(np.abs(L), axis=0, keepdims=True)
            viol = np.where((np.abs(L) == m) & (excess > 0), excess, 0.0)
            return viol, "dual-ball"
        s = _j2_slice_weights(cls, spec)[None, :]
        viol = np.where(cls.sign != 0, np.abs(L - cls.sign * s), np.maximum(np.abs(L) - s, 0.0))
        return viol, "scaled-sign"
    ub = cls.cleaned
    viol = np.zeros(spec.shape)
    act = cls.space_active
    if np.any(act):
        target = ub[act] / space_l2_profile(ub[act], spec)[:, None]
        viol[act] = np.abs(L[act] - target)
    if np.any(~act):
        excess = np.maximum(space_l2_profile(L[~act], spec) - 1.0, 0.0)
        viol[~act] = excess[:, None]
    return viol, "normalized-slice"


def subdiff_contains(kind, ubar: GridFunction, lam: GridFunction, tol: float = 1e-10) -> SubdiffReport:
    viol, region = subdiff_violation(kind, ubar, lam)
    bad = viol > tol
    return SubdiffReport(
        ok=not bool(np.any(bad)),
        max_violation=float(np.max(viol)) if viol.size else 0.0,
        cells=_violating_cells(bad),
        region=region,
    )


def _pointwise_gap_density(kind, ubar, lam, v, cls):
    """Integrand whose integral is ``j'(ubar; v) - <lam, v>``.

    Returns ``(density, pieces)``; ``pieces`` are the nonnegative local
    contributions (per cell, or per spatial slice for j3) that vanish exactly
    when the pointwise characterization holds.
    """
    spec = ubar.spec
    L, V = lam.values, v.values
    if kind is SparsityKind.J1:
        dens = _local_l1_derivative(cls.sign, V) - L * V
        return dens, dens * spec.cell_measure
    if kind is SparsityKind.J2:
        if cls.is_zero:
            nv = j_value(kind, v)
            if nv == 0:
                z = np.zeros(spec.shape)
                return z, z
            w = time_l1_profile(V, spec)[None, :] / nv
        else:
            w = _j2_slice_weights(cls, spec)[None, :]
        dens = _local_l1_derivative(cls.sign, V) * w - L * V
        return dens, dens * spec.cell_measure
    # J3: the characterization is per spatial slice
    dt = spec.cell_measure_time
    act = cls.space_active
    dens = np.zeros(spec.shape)
    ub = cls.cleaned
    if np.any(act):
        nu = space_l2_profile(ub[act], spec)[:, None]
        dens[act] = ub[act] * V[act] / nu - L[act] * V[act]
    pieces = np.zeros(spec.n_space)
    if np.any(~act):
        nv = space_l2_profile(V[~act], spec)
        with np.errstate(invalid="ignore", divide="ignore"):
            d0 = np.where(nv[:, None] > 0, V[~act] ** 2 / nv[:, None], 0.0)
        dens[~act] = d0 - L[~act] * V[~act]
        pieces[~act] = np.sum(dens[~act], axis=1) * dt * spec.cell_measure_space
    pieces[act] = np.sum(dens[act], axis=1) * dt * spec.cell_measure_space
    return dens, pieces


def pairing_equals_dirderiv(kind, ubar: GridFunction, lam: GridFunction, v: GridFunction, tol: float = 1e-10) -> bool:
    """Check ``<lam, v> == j'(ubar; v)`` for a subgradient ``lam``.

    Two routes are evaluated: the closed-form derivative minus the pairing,
    and the integral of the pointwise characterization.  If they disagree by
    more than ``tol`` (relative) an :class:`InconsistentCharacterization` is
    raised.
    """
    kind = SparsityKind.parse(kind)
    cls = classify(ubar)
    dd = j_dir_deriv(kind, ubar, v, cls)
    pairing = lam.inner(v)
    gap = dd - pairing
    scale = max(1.0, abs(dd), abs(pairing))
    dens, pieces = _pointwise_gap_density(kind, ubar, lam, v, cls)
    gap_pointwise = float(np.sum(dens)) * ubar.spec.cell_measure
    pairing_ok = abs(gap) <= tol * scale
    pointwise_ok = bool(np.all(pieces <= tol * scale))
    if abs(gap - gap_pointwise) > tol * scale or (pairing_ok and not pointwise_ok):
        raise InconsistentCharacterization(
            f"pairing gap {gap:.3e} vs pointwise gap {gap_pointwise:.3e} "
            f"(pairing_ok={pairing_ok}, pointwise_ok={pointwise_ok})"
        )
    return pairing_ok


# ---------------------------------------------------------------------------
# proximal maps of  step * mu * j + indicator of [alpha, beta]

PROX_TOL = 1e-10


def _soft(u, kappa):
    return np.sign(u) * np.maximum(np.abs(u) - kappa, 0.0)


def _bisect_increasing(f, lo, hi, iters=200):
    """Vectorized bisection for the sign change of increasing ``f`` on [lo, hi]."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
        if np.all((hi - lo) <= 4 * np.finfo(float).eps * np.maximum(np.abs(hi), 1e-300)):
            break
    return 0.5 * (lo + hi)


def _prox_j3(u, c, alpha, beta, spec, tol, max_iter):
    dt = spec.cell_measure_time
    tau = c / math.sqrt(dt)
    norms = np.sqrt(np.sum(u * u, axis=1))
    w = np.zeros_like(u)
    live = norms > tau
    if not np.any(live):
        return w
    U = u[live]

    def g(theta):
        # g(theta) = |clamp(theta u)| (1 - theta) - theta tau; positive left of the root
        th = theta[:, None]
        r = np.sqrt(np.sum(np.clip(th * U, alpha, beta) ** 2, axis=1))
        return -(r * (1.0 - theta) - theta * tau)

    theta = _bisect_increasing(g, np.zeros(len(U)), np.ones(len(U)), iters=max_iter)
    W = np.clip(theta[:, None] * U, alpha, beta)
    r = np.sqrt(np.sum(W * W, axis=1))
    resid = np.max(np.abs(W - np.clip(U * (r / (r + tau))[:, None], alpha, beta)))
    if resid > tol * max(1.0, float(np.max(np.abs(U)))):
        raise ProxNoConvergence("j3 prox group scale did not converge", resid)
    w[live] = W
    return w


def _slice_l1(u, kappa, alpha, beta, hs):
    """t -> ||clamp(soft(u(., t), kappa_t))||_{L1(Omega)}."""
    mag = np.maximum(np.abs(u) - kappa[None, :], 0.0)
    cap = np.where(u > 0, beta, -alpha)
    return np.sum(np.minimum(mag, cap), axis=0) * hs


def _prox_j2(u, c, alpha, beta, spec, tol, max_iter):
    hs, dt = spec.cell_measure_space, spec.cell_measure_time
    m = np.max(np.abs(u), axis=0)
    if c >= math.sqrt(float(np.sum(m * m)) * dt):
        return np.zeros_like(u)

    a0 = _slice_l1(u, np.zeros_like(m), alpha, beta, hs)

    def kappas(rho):
        # per-slice fixed point kappa = rho * A_t(kappa); A_t is decreasing, so kappa <= rho * A_t(0)
        top = np.minimum(m, rho * a0)
        return _bisect_increasing(lambda k: k - rho * _slice_l1(u, k, alpha, beta, hs), np.zeros_like(m), top)

    def phi(log_rho):
        k = kappas(math.exp(log_rho))
        # relative and overflow/underflow safe: kappa ~ c may be far below sqrt(tiny)
        return math.hypot(*k) * math.sqrt(dt) / c - 1.0

    # ||kappa(rho)|| <= rho ||A(0)||, so phi <= 0 at rho = c / ||A(0)||
    lo = math.log(c) - 0.5 * math.log(float(np.sum(a0 * a0)) * dt)
    hi = lo + 2.0
    while phi(hi) < 0:
        hi += 2.0
        if hi - lo > 1400:
            raise ProxNoConvergence("j2 prox multiplier bracket failed")
    if phi(lo) >= 0:  # the bound is attained up to rounding (tiny c)
        log_rho = lo
    else:
        log_rho = brentq(phi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    k = kappas(math.exp(log_rho))
    w = np.sign(u) * np.minimum(np.maximum(np.abs(u) - k[None, :], 0.0), np.where(u > 0, beta, -alpha))
    a = time_l1_profile(w, spec)
    n = math.sqrt(float(np.sum(a * a)) * dt)
    resid = float(np.max(np.abs(k * n - c * a))) / max(c * max(float(np.max(a)), 1e-300), 1e-300) if n > 0 else 0.0
    if resid > tol:
        raise ProxNoConvergence("j2 prox outer coupling did not converge", resid)
    return w


def prox(kind, mu: float, step: float, u: GridFunction, box, *, tol: float = PROX_TOL, max_iter: int = 200) -> GridFunction:
    """``argmin_w 1/2 ||w - u||^2 + step * mu * j(w)`` subject to ``alpha <= w <= beta``."""
    kind = SparsityKind.parse(kind)
    alpha, beta = box
    if step <= 0:
        raise ValueError("step must be positive")
    if not alpha < 0 < beta:
        raise ValueError("box must satisfy alpha < 0 < beta")
    c = step * mu
    vals = u.values
    if c == 0:
        return u.with_values(np.clip(vals, alpha, beta))
    if kind is SparsityKind.J1:
        return u.with_values(np.clip(_soft(vals, c), alpha, beta))
    if kind is SparsityKind.J3:
        return u.with_values(_prox_j3(vals, c, alpha, beta, u.spec, tol, max_iter))
    return u.with_values(_prox_j2(vals, c, alpha, beta, u.spec, tol, max_iter))


def prox_objective(kind, mu, step, u: GridFunction, w: GridFunction) -> float:
    return 0.5 * (w - u).norm() ** 2 + step * mu * j_value(kind, w)
