"""Uniform space-time grids, piecewise-constant grid functions and mixed norms.

A :class:`GridFunction` stores one value per space-time cell in an array of
shape ``(n_space, n_time)``.  Spatial cells are flattened in C order, so every
mixed norm reduces to a reduction over axis 0 (space) or axis 1 (time).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

_BINARY_MAGIC = "SPARSOC-GRIDFUNCTION"


@dataclass(frozen=True)
class GridSpec:
    """Uniform discretization of ``Omega x (0, T)`` with ``Omega`` a box."""

    spatial_cells: tuple[int, ...]
    time_cells: int
    spatial_extent: tuple[float, ...] = None
    horizon: float = 1.0

    def __post_init__(self):
        cells = tuple(int(n) for n in np.atleast_1d(self.spatial_cells))
        extent = self.spatial_extent
        if extent is None:
            extent = (1.0,) * len(cells)
        extent = tuple(float(e) for e in np.atleast_1d(extent))
        object.__setattr__(self, "spatial_cells", cells)
        object.__setattr__(self, "spatial_extent", extent)
        object.__setattr__(self, "time_cells", int(self.time_cells))
        object.__setattr__(self, "horizon", float(self.horizon))
        if len(cells) not in (1, 2):
            raise ValueError("spatial dimension must be 1 or 2")
        if len(extent) != len(cells):
            raise ValueError("spatial_extent must have one entry per spatial dimension")
        if min(cells) < 1 or self.time_cells < 1:
            raise ValueError("all cell counts must be >= 1")
        if min(extent) <= 0 or self.horizon <= 0:
            raise ValueError("all extents must be > 0")

    @classmethod
    def uniform(cls, n_space, n_time, *, dim=1, length=1.0, horizon=1.0):
        return cls((n_space,) * dim, n_time, (length,) * dim, horizon)

    @property
    def spatial_dim(self) -> int:
        return len(self.spatial_cells)

    @property
    def spatial_widths(self) -> tuple[float, ...]:
        return tuple(e / n for e, n in zip(self.spatial_extent, self.spatial_cells))

    @property
    def cell_measure_space(self) -> float:
        return math.prod(self.spatial_widths)

    @property
    def cell_measure_time(self) -> float:
        return self.horizon / self.time_cells

    @property
    def cell_measure(self) -> float:
        return self.cell_measure_space * self.cell_measure_time

    @property
    def n_space(self) -> int:
        return math.prod(self.spatial_cells)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_space, self.time_cells)

    @property
    def space_measure(self) -> float:
        return math.prod(self.spatial_extent)

    @property
    def total_measure(self) -> float:
        return self.space_measure * self.horizon

    def space_centers(self) -> np.ndarray:
        """Cell midpoints, shape ``(n_space, dim)`` in flattening order."""
        axes = [(np.arange(n) + 0.5) * h for n, h in zip(self.spatial_cells, self.spatial_widths)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def time_centers(self) -> np.ndarray:
        return (np.arange(self.time_cells) + 0.5) * self.cell_measure_time

    def time_nodes(self) -> np.ndarray:
        return np.arange(self.time_cells + 1) * self.cell_measure_time

    def to_dict(self) -> dict:
        return {
            "spatial_cells": list(self.spatial_cells),
            "time_cells": self.time_cells,
            "spatial_extent": list(self.spatial_extent),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(
            tuple(data["spatial_cells"]),
            data["time_cells"],
            tuple(data["spatial_extent"]),
            data["horizon"],
        )


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Immutable piecewise-constant function on a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1 and vals.size == self.spec.n_space * self.spec.time_cells:
            vals = vals.reshape(self.spec.shape)
        elif vals.ndim == self.spec.spatial_dim + 1 and vals.shape[:-1] == self.spec.spatial_cells:
            vals = vals.reshape(self.spec.shape)
        if vals.shape != self.spec.shape:
            raise ValueError(f"values have shape {vals.shape}, grid expects {self.spec.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # construction helpers
    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def constant(cls, spec: GridSpec, c: float) -> "GridFunction":
        return cls(spec, np.full(spec.shape, float(c)))

    @classmethod
    def from_callable(cls, spec: GridSpec, f: Callable) -> "GridFunction":
        """Sample ``f(x, t)`` at cell midpoints.

        ``x`` is passed with shape ``(n_space, 1)`` in 1D and as a tuple of
        such columns in 2D; ``t`` has shape ``(1, n_time)``.
        """
        xc = spec.space_centers()
        t = spec.time_centers()[None, :]
        if spec.spatial_dim == 1:
            vals = f(xc[:, :1], t)
        else:
            vals = f(tuple(xc[:, k : k + 1] for k in range(spec.spatial_dim)), t)
        return cls(spec, np.broadcast_to(vals, spec.shape))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.spec, values)

    # arithmetic
    def _coerce(self, other):
        if isinstance(other, GridFunction):
            if other.spec != self.spec:
                raise ValueError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.with_values(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._coerce(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def inner(self, other: "GridFunction") -> float:
        """L2(Omega_T) inner product."""
        return float(np.sum(self.values * self._coerce(other)) * self.spec.cell_measure)

    def norm(self) -> float:
        return math.sqrt(max(self.inner(self), 0.0))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __repr__(self):
        return f"GridFunction(spec={self.spec!r}, max_abs={self.max_abs():.6g})"


def integrate(f: GridFunction) -> float:
    """Midpoint quadrature of ``f`` over ``Omega x (0, T)``."""
    return float(np.sum(f.values) * f.spec.cell_measure_space * f.spec.cell_measure_time)


@dataclass(frozen=True)
class MixedNorms:
    l2: float
    l1: float
    time_l1_profile: np.ndarray  # t -> ||u(., t)||_{L1(Omega)}
    space_l2_profile: np.ndarray  # x -> ||u(x, .)||_{L2(0, T)}
    l2_l1: float  # ||u||_{L2(0,T; L1(Omega))}
    linf_l2: float  # ||u||_{Linf(Omega; L2(0,T))}


def time_l1_profile(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    return np.sum(np.abs(values), axis=0) * spec.cell_measure_space


def space_l2_profile(values: np.ndarray, spec: GridSpec) -> np.ndarray:
    return np.sqrt(np.sum(values * values, axis=1) * spec.cell_measure_time)


def mixed_norms(u: GridFunction) -> MixedNorms:
    spec = u.spec
    v = u.values
    tprof = time_l1_profile(v, spec)
    xprof = space_l2_profile(v, spec)
    return MixedNorms(
        l2=math.sqrt(float(np.sum(v * v)) * spec.cell_measure),
        l1=float(np.sum(np.abs(v))) * spec.cell_measure,
        time_l1_profile=tprof,
        space_l2_profile=xprof,
        l2_l1=math.sqrt(float(np.sum(tprof * tprof)) * spec.cell_measure_time),
        linf_l2=float(np.max(xprof)),
    )


# ---------------------------------------------------------------------------
# I/O


def write_csv(f: GridFunction, path) -> None:
    """One row per (flattened) spatial cell, one column per time cell."""
    np.savetxt(path, f.values, delimiter=",", fmt="%.17g")


def read_csv(path, spec: GridSpec) -> GridFunction:
    vals = np.loadtxt(path, delimiter=",", ndmin=2)
    return GridFunction(spec, vals)


def write_binary(f: GridFunction, path) -> None:
    """Single JSON header line followed by little-endian float64 values."""
    header = json.dumps({"format": _BINARY_MAGIC, "version": 1, **f.spec.to_dict()}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_binary(path) -> GridFunction:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("ascii"))
    if header.get("format") != _BINARY_MAGIC:
        raise ValueError(f"{path}: not a grid function file")
    spec = GridSpec.from_dict(header)
    vals = np.frombuffer(raw[nl + 1 :], dtype="<f8")
    return GridFunction(spec, vals.reshape(spec.shape))

