"""Second-order optimality checks for spatio-temporally sparse optimal control.

The package works on piecewise-constant functions over a uniform space-time
grid of ``Omega x (0, T)`` and provides

* the sparsity functionals ``j1`` (L1), ``j2`` (L2 in time of L1 in space) and
  ``j3`` (L1 in space of L2 in time) with derivatives, subgradients and proxes,
* box-constraint cone geometry and critical-cone sampling,
* closed-form second subderivatives, curvature quotients and recovery sequences,
* a semilinear parabolic control problem with exact discrete adjoints,
* a proximal gradient solver and a reporting CLI.
"""

from sparsoc.errors import SparsocError
from sparsoc.fnspace import GridFunction, GridSpec, integrate, mixed_norms
from sparsoc.sparsity import SparsityKind

__all__ = [
    "GridFunction",
    "GridSpec",
    "SparsityKind",
    "SparsocError",
    "integrate",
    "mixed_norms",
]

__version__ = "0.1.0"
