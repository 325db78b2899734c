"""Curvature of j2 at the origin along a clamped singular direction.

Setting: ``Omega = (0, 1)``, ``T = 1``, ``D = {x < t}``, ``ubar = 0``,
``mu = 1``, ``[alpha, beta] = [-1, 1]`` and ``F'(ubar) = -1`` on ``D`` (``-0.5``
elsewhere).  The direction ``v(x, t) = 1/t`` on ``D`` is critical, and its
clamps ``v_s = min(v, 1/s)`` give

    j2(v_s)        = (1 - 2s/3)^(1/2)
    -<F', v_s>     = 1 - s/2
    quotient(s)    = [j2(v_s) - (1 - s/2)] / (s/2)  ->  1/3.

Grid values are exact cell averages of the continuous functions, so the
pairing is reproduced exactly and only ``j2`` carries a discretization error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sparsoc.cones import certified_subgradient
from sparsoc.fnspace import GridFunction, GridSpec
from sparsoc.second_order import curvature_quotient
from sparsoc.sparsity import SparsityKind, canonical_subgradient, j_value

MU = 1.0
BOX = (-1.0, 1.0)
OFF_D_GRADIENT = -0.5


def _primitives(a, b, level):
    """``int_a^b g`` and ``int_a^b g(s) s ds`` for ``g(s) = min(1/s, level)``."""
    if math.isinf(level):
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = np.where(a > 0, np.log(np.where(a > 0, b / np.where(a > 0, a, 1.0), 1.0)), np.inf)
        p1 = np.where(b <= a, 0.0, p1)
        return p1, np.maximum(b - a, 0.0)
    c = 1.0 / level
    p1 = level * (np.minimum(b, c) - np.minimum(a, c)) + np.log(np.maximum(b, c) / np.maximum(a, c))
    p2 = level * (np.minimum(b, c) ** 2 - np.minimum(a, c) ** 2) / 2 + (np.maximum(b, c) - np.maximum(a, c))
    p1 = np.where(b <= a, 0.0, p1)
    p2 = np.where(b <= a, 0.0, p2)
    return p1, p2


def direction_cell_averages(n: int, level: float = math.inf) -> np.ndarray:
    """Cell averages of ``min(1/t, level) * 1{x < t}`` on an ``n x n`` grid of ``(0,1)^2``."""
    h = 1.0 / n
    edges = np.arange(n + 1) * h
    xa, xb = edges[:-1, None], edges[1:, None]
    sa, sb = edges[None, :-1], edges[None, 1:]
    # part of the time cell where the x-interval is cut by the diagonal
    lo = np.maximum(sa, xa)
    hi = np.minimum(sb, xb)
    p1, p2 = _primitives(lo, np.maximum(hi, lo), level)
    with np.errstate(invalid="ignore"):
        cut = np.where(xa > 0, p2 - xa * np.where(np.isfinite(p1), p1, 0.0), p2)
    # part where the whole x-interval lies inside D
    lo2 = np.maximum(sa, xb)
    q1, _ = _primitives(lo2, np.maximum(sb, lo2), level)
    full = h * q1
    return (cut + full) / (h * h)


def setup(n: int):
    spec = GridSpec.uniform(n, n)
    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    on_d = i <= j  # cells meeting D
    gradF = GridFunction(spec, np.where(on_d, -1.0, OFF_D_GRADIENT))
    ubar = GridFunction.zeros(spec)
    lam = canonical_subgradient(SparsityKind.J2, ubar, gradF, MU, BOX)
    return spec, ubar, gradF, lam


@dataclass
class CounterexampleRow:
    t: float
    j2: float
    j2_exact: float
    pairing: float
    pairing_exact: float
    quotient: float
    quotient_exact: float


@dataclass
class CounterexampleTable:
    grid: int
    rows: list
    richardson: list  # (t, extrapolated value) for consecutive pairs
    limit: float
    limit_t: float

    def to_dict(self):
        return {
            "grid": self.grid,
            "rows": [vars(r) for r in self.rows],
            "richardson": [{"t": t, "value": v} for t, v in self.richardson],
            "extrapolated_limit": self.limit,
            "extrapolation_t": self.limit_t,
            "expected_limit": 1.0 / 3.0,
        }


def richardson_plateau(ts, qs):
    """First-order Richardson values and the one on the flattest stretch.

    Consecutive parameters must share the ratio ``r = t_i / t_{i+1}``.
    The discretization error grows as ``t`` shrinks while the truncation
    error shrinks, so the estimate is taken where successive extrapolated
    values agree best.
    """
    ts = np.asarray(ts, dtype=float)
    qs = np.asarray(qs, dtype=float)
    if len(ts) < 2:
        return [], float(qs[-1]) if len(qs) else math.nan, float(ts[-1]) if len(ts) else math.nan
    r = ts[:-1] / ts[1:]
    ext = (r * qs[1:] - qs[:-1]) / (r - 1.0)
    pairs = list(zip(ts[1:].tolist(), ext.tolist()))
    if len(ext) == 1:
        return pairs, float(ext[0]), float(ts[1])
    diffs = np.abs(np.diff(ext))
    k = int(np.argmin(diffs))
    return pairs, float(0.5 * (ext[k] + ext[k + 1])), float(ts[k + 1])


def default_schedule(t_min: float = 2.0**-10, t_max: float = 2.0**-2) -> list[float]:
    out = []
    t = t_max
    while t >= t_min * (1 - 1e-12):
        out.append(t)
        t /= 2
    return out


def reproduce_j2_counterexample(schedule=None, n: int = 512) -> CounterexampleTable:
    schedule = default_schedule() if schedule is None else list(schedule)
    if any(b >= a for a, b in zip(schedule, schedule[1:])) or min(schedule) <= 0:
        raise ValueError("schedule must be strictly decreasing and positive")
    spec, ubar, gradF, lam = setup(n)
    w = certified_subgradient(ubar, gradF, lam, MU, BOX)
    rows = []
    for t in schedule:
        vt = GridFunction(spec, direction_cell_averages(n, 1.0 / t))
        j2 = j_value(SparsityKind.J2, vt)
        pairing = -gradF.inner(vt)
        q = curvature_quotient(SparsityKind.J2, ubar, w, vt, t, mu=MU, box=BOX)
        j2e = math.sqrt(1 - 2 * t / 3)
        rows.append(CounterexampleRow(t, j2, j2e, pairing, 1 - t / 2, float(q), (j2e - (1 - t / 2)) / (t / 2)))
    pairs, limit, at = richardson_plateau([r.t for r in rows], [r.quotient for r in rows])
    return CounterexampleTable(n, rows, pairs, limit, at)
