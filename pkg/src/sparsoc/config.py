"""Problem configuration and its INI file format.

Example::

    [grid]
    dim = 1
    n_space = 32
    n_time = 32
    length = 1.0
    horizon = 1.0

    [problem]
    kind = j1
    mu = 0.01
    alpha = -1
    beta = 1
    nu = 1.0

    [pde]
    kappa = 1.0
    nonlinearity = none
    y_d = sin(pi*x) * (1 + t)
    y0 = 0

    [solver]
    tol = 1e-10
    max_iter = 2000

    [analysis]
    samples = 5
    seed = 0
    growth_radius = 1e-2
    growth_samples = 500

``y_d`` and ``y0`` are numpy expressions in ``x`` (``x1``, ``x2`` in 2D) and
``t``, or paths to CSV files (rows are spatial cells).
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from sparsoc.errors import ConfigError
from sparsoc.fnspace import GridFunction, GridSpec, read_csv
from sparsoc.pde import NONLINEARITIES, PdeConfig
from sparsoc.sparsity import SparsityKind

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
    "log": np.log, "tanh": np.tanh, "minimum": np.minimum, "maximum": np.maximum,
    "where": np.where, "sign": np.sign,
}
_CONSTS = {"pi": np.pi, "e": np.e}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.Eq, ast.NotEq, ast.BoolOp, ast.And, ast.Or,
)


def eval_expression(expr: str, variables: dict):
    """Evaluate a restricted arithmetic expression with numpy semantics."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc.msg}") from None
    names = {**_FUNCS, **_CONSTS, **variables}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"expression {expr!r} uses unsupported syntax ({type(node).__name__})")
        if isinstance(node, ast.Name) and node.id not in names:
            raise ConfigError(f"expression {expr!r} uses unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"expression {expr!r} calls an unsupported function")
    with np.errstate(all="ignore"):  # non-finite results are rejected by the caller
        return eval(compile(tree, "<config>", "eval"), {"__builtins__": {}}, names)


@dataclass(frozen=True)
class ProblemConfig:
    """Optimal control problem ``min F(u) + mu j(u)`` over ``alpha <= u <= beta``."""

    pde: PdeConfig
    kind: SparsityKind = SparsityKind.J1
    mu: float = 0.01
    alpha: float = -1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SparsityKind.parse(self.kind))
        validate_box(self.alpha, self.beta)
        if not self.mu >= 0:
            raise ConfigError("mu must be nonnegative (mu >= 0)")

    @property
    def box(self) -> tuple[float, float]:
        return (self.alpha, self.beta)

    @property
    def spec(self) -> GridSpec:
        return self.pde.spec

    @property
    def nu(self) -> float:
        return self.pde.nu

    def with_(self, **changes) -> "ProblemConfig":
        return replace(self, **changes)


def validate_box(alpha, beta):
    if not (alpha < 0 < beta):
        raise ConfigError(f"control bounds violate alpha < 0 < beta (α < 0 < β): alpha={alpha}, beta={beta}")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    max_iter: int = 2000
    step: float | None = None


@dataclass(frozen=True)
class AnalysisSettings:
    samples: int = 5
    seed: int = 0
    growth_radius: float = 1e-2
    growth_samples: int = 500
    t_min: float = 4.0**-10


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig
    solver: SolverSettings = field(default_factory=SolverSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    source: str = "<defaults>"


DEFAULTS = {
    "grid": {"dim": "1", "n_space": "32", "n_time": "32", "length": "1.0", "horizon": "1.0"},
    "problem": {"kind": "j1", "mu": "0.01", "alpha": "-1.0", "beta": "1.0", "nu": "1.0"},
    "pde": {"kappa": "1.0", "nonlinearity": "none", "y_d": "sin(pi*x) * (1 + t)", "y0": "0", "newton_tol": "1e-13"},
    "solver": {"tol": "1e-10", "max_iter": "2000"},
    "analysis": {"samples": "5", "seed": "0", "growth_radius": "1e-2", "growth_samples": "500", "t_min": str(4.0**-10)},
}


def _field(spec: GridSpec, text: str, base: Path, *, spatial_only: bool):
    text = text.strip()
    path = (base / text) if not Path(text).is_absolute() else Path(text)
    if text.lower().endswith(".csv"):
        if not path.exists():
            raise ConfigError(f"data file not found: {path}")
        if spatial_only:
            vals = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
            if vals.size != spec.n_space:
                raise ConfigError(f"{path}: expected {spec.n_space} values, found {vals.size}")
            return vals
        try:
            return read_csv(path, spec)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    xc = spec.space_centers()
    t = np.zeros((1, 1)) if spatial_only else spec.time_centers()[None, :]
    variables = {"t": t, "x": xc[:, :1]}
    for k in range(spec.spatial_dim):
        variables[f"x{k + 1}"] = xc[:, k : k + 1]
    vals = np.asarray(eval_expression(text, variables), dtype=float)
    shape = (spec.n_space, 1) if spatial_only else spec.shape
    try:
        vals = np.broadcast_to(vals, shape)
    except ValueError:
        raise ConfigError(f"expression {text!r} does not broadcast to the grid") from None
    if not np.all(np.isfinite(vals)):
        raise ConfigError(f"expression {text!r} produced non-finite values")
    return vals[:, 0].copy() if spatial_only else GridFunction(spec, vals)


def _get(cp, section, key, conv):
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {conv.__name__}") from None


def parse_config(text: str = "", base_dir=".", source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser()
    cp.read_dict(DEFAULTS)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    known = set(DEFAULTS)
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"{source}: unknown section [{section}]")
        extra = set(cp[section]) - set(DEFAULTS[section]) - {"step"}
        if extra:
            raise ConfigError(f"{source}: unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
    base = Path(base_dir)

    dim = _get(cp, "grid", "dim", int)
    if dim not in (1, 2):
        raise ConfigError("[grid] dim must be 1 or 2")
    try:
        spec = GridSpec.uniform(
            _get(cp, "grid", "n_space", int), _get(cp, "grid", "n_time", int), dim=dim,
            length=_get(cp, "grid", "length", float), horizon=_get(cp, "grid", "horizon", float),
        )
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    nonlin = cp.get("pde", "nonlinearity").strip()
    if nonlin not in NONLINEARITIES:
        raise ConfigError(f"[pde] nonlinearity must be one of {sorted(NONLINEARITIES)}")
    kappa = _get(cp, "pde", "kappa", float)
    if not kappa > 0:
        raise ConfigError("[pde] kappa must satisfy kappa > 0")
    nu = _get(cp, "problem", "nu", float)
    if nu < 0:
        raise ConfigError("[problem] nu must satisfy nu >= 0")
    y_d = _field(spec, cp.get("pde", "y_d"), base, spatial_only=False)
    y0 = _field(spec, cp.get("pde", "y0"), base, spatial_only=True)
    pde_cfg = PdeConfig(spec, y_d, y0, kappa=kappa, nonlinearity=nonlin, nu=nu,
                        newton_tol=_get(cp, "pde", "newton_tol", float))
    try:
        kind = SparsityKind.parse(cp.get("problem", "kind"))
    except ValueError as exc:
        raise ConfigError(f"[problem] {exc}") from None
    problem = ProblemConfig(
        pde_cfg, kind, _get(cp, "problem", "mu", float),
        _get(cp, "problem", "alpha", float), _get(cp, "problem", "beta", float),
    )
    step = cp.get("solver", "step", fallback=None)
    solver = SolverSettings(
        tol=_get(cp, "solver", "tol", float),
        max_iter=_get(cp, "solver", "max_iter", int),
        step=float(step) if step else None,
    )
    analysis = AnalysisSettings(
        samples=_get(cp, "analysis", "samples", int),
        seed=_get(cp, "analysis", "seed", int),
        growth_radius=_get(cp, "analysis", "growth_radius", float),
        growth_samples=_get(cp, "analysis", "growth_samples", int),
        t_min=_get(cp, "analysis", "t_min", float),
    )
    return RunConfig(problem, solver, analysis, source)


def load_config(path=None) -> RunConfig:
    """Read a config file; ``None`` or an empty file yields the defaults."""
    if path is None:
        return parse_config("", ".", "<defaults>")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), p.parent, str(p))
