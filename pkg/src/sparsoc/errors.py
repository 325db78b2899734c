"""Exception hierarchy."""


class SparsocError(Exception):
    """Base class for all package errors."""


class ConfigError(SparsocError, ValueError):
    pass


class DegenerateCase(SparsocError):
    """No admissible subgradient is aligned with the residual.

    ``candidate`` holds the best-aligned admissible element that was found.
    """

    def __init__(self, message, candidate=None):
        super().__init__(message)
        self.candidate = candidate


class ProxNoConvergence(SparsocError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InconsistentCharacterization(SparsocError):
    pass


class InfeasibleBase(SparsocError):
    pass


class NotStationary(SparsocError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NotCritical(SparsocError):
    pass


class UnknownValue(SparsocError):
    """The requested quantity is not known in closed form."""


class ZeroBase(SparsocError):
    pass


class NewtonDiverged(SparsocError):
    def __init__(self, step, residual):
        super().__init__(f"Newton iteration diverged at time step {step} (residual={residual:.3e})")
        self.step = step
        self.residual = residual


class SingularSystem(SparsocError):
    pass


class MaxIterReached(SparsocError):
    """Raised by the solver; ``result`` carries the best iterate."""

    def __init__(self, result):
        super().__init__(
            f"maximum number of iterations reached ({result.iterations}), "
            f"KKT residual {result.kkt_residual:.3e}"
        )
        self.result = result
