"""Random first-order points ``(ubar, F'(ubar), lam)`` with known structure.

The smooth part is not modelled; instead ``F'`` is chosen so that
``0 in F' + mu*lam + N(ubar)`` holds exactly.  Used by tests and by the
finite-difference suite to exercise every branch of the cone and curvature
formulas without running a solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sparsoc.fnspace import GridFunction, GridSpec, space_l2_profile, time_l1_profile
from sparsoc.sparsity import SparsityKind


@dataclass(frozen=True)
class StationaryInstance:
    kind: SparsityKind
    ubar: GridFunction
    gradF: GridFunction
    lam: GridFunction
    mu: float
    box: tuple


def _pattern(rng, shape, alpha, beta, zero_frac, bound_frac, min_gap):
    """Random base values: zeros, bounds, and interior values away from both."""
    u = np.empty(shape)
    r = rng.random(shape)
    at_zero = r < zero_frac
    at_lo = (r >= zero_frac) & (r < zero_frac + bound_frac / 2)
    at_hi = (r >= zero_frac + bound_frac / 2) & (r < zero_frac + bound_frac)
    inner = ~(at_zero | at_lo | at_hi)
    pos = rng.random(shape) < 0.5
    lo_mag = min_gap
    u_pos = rng.uniform(lo_mag, beta - min_gap, shape)
    u_neg = rng.uniform(alpha + min_gap, -lo_mag, shape)
    u[inner] = np.where(pos, u_pos, u_neg)[inner]
    u[at_zero] = 0.0
    u[at_lo] = alpha
    u[at_hi] = beta
    return u


def stationary_instance(kind, spec: GridSpec, *, mu: float = 1.0, box=(-1.0, 1.0), seed=None,
                        zero_frac: float = 0.3, bound_frac: float = 0.2, degenerate_frac: float = 0.5,
                        min_gap: float = 0.1, zero_base: bool = False, on_sphere: bool = True) -> StationaryInstance:
    """Build a first-order point with a nontrivial critical cone.

    ``degenerate_frac`` is the share of active or zero cells where the
    multiplier sits on the boundary of its admissible set (or the normal
    component vanishes), which is where critical directions live.
    ``zero_base`` forces ``ubar = 0``; for j2 ``on_sphere`` then puts ``lam``
    on the unit sphere of the dual norm.
    """
    kind = SparsityKind.parse(kind)
    rng = np.random.default_rng(seed)
    alpha, beta = box
    shape = spec.shape
    if zero_base:
        u = np.zeros(shape)
    else:
        u = _pattern(rng, shape, alpha, beta, zero_frac, bound_frac, min_gap)
        if kind is SparsityKind.J2 and spec.time_cells > 1:
            dead = rng.random(spec.time_cells) < zero_frac
            dead[rng.integers(spec.time_cells)] = False
            u[:, dead] = 0.0
        if kind is SparsityKind.J3 and spec.n_space > 1:
            dead = rng.random(spec.n_space) < zero_frac
            dead[rng.integers(spec.n_space)] = False
            u[dead, :] = 0.0
        if not np.any(u):
            u[0, 0] = beta / 2
    sgn = np.sign(u)
    zero = u == 0
    edge = rng.random(shape) < degenerate_frac

    if kind is SparsityKind.J1:
        inner = rng.uniform(-0.95, 0.95, shape)
        lam = np.where(zero, np.where(edge, np.where(rng.random(shape) < 0.5, 1.0, -1.0), inner), sgn)
    elif kind is SparsityKind.J2:
        if zero_base:
            lam = rng.uniform(-1, 1, shape)
            m = np.max(np.abs(lam), axis=0)
            nrm = np.sqrt(np.sum(m * m) * spec.cell_measure_time)
            lam = lam / nrm * (1.0 if on_sphere else 0.8)
        else:
            a = time_l1_profile(u, spec)
            s = (a / np.sqrt(np.sum(a * a) * spec.cell_measure_time))[None, :]
            pm = np.where(rng.random(shape) < 0.5, 1.0, -1.0)
            inner = s * rng.uniform(-0.95, 0.95, shape)
            lam = np.where(zero, np.where(edge, pm * s, inner), sgn * s)
    else:
        lam = np.zeros(shape)
        nu = space_l2_profile(u, spec)
        act = nu > 0
        lam[act] = u[act] / nu[act, None]
        rows = ~act
        if np.any(rows):
            g = rng.standard_normal((int(rows.sum()), spec.time_cells))
            gn = space_l2_profile(g, spec)
            radius = np.where(rng.random(len(gn)) < degenerate_frac, 1.0, rng.uniform(0.1, 0.9, len(gn)))
            lam[rows] = g / gn[:, None] * radius[:, None]

    # normal cone component: sign-correct at bounds, sometimes zero
    lo, hi = u == alpha, u == beta
    mag = rng.uniform(0.1, 1.0, shape) * np.where(rng.random(shape) < degenerate_frac, 0.0, 1.0)
    n = np.where(lo, -mag, np.where(hi, mag, 0.0))
    gradF = -mu * lam - n
    return StationaryInstance(kind, GridFunction(spec, u), GridFunction(spec, gradF), GridFunction(spec, lam), mu, tuple(box))
