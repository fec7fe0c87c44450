"""Exception hierarchy shared by the numerical modules.

Every error carries a short machine-readable ``category`` that the CLI maps
to an exit code.
"""


class WDLError(Exception):
    category = "numerical"


class ConfigError(WDLError):
    category = "config"


class DomainError(WDLError, ValueError):
    category = "domain"


class InvalidOrderError(DomainError):
    pass


class SingularArgumentError(DomainError):
    pass


class InvalidZeroError(DomainError):
    pass


class NoConvergence(WDLError):
    """Iteration budget exhausted.  ``last`` and ``residual`` hold the final iterate."""

    def __init__(self, msg, last=None, residual=None):
        super().__init__(msg)
        self.last = last
        self.residual = residual


class SheetEscape(WDLError):
    pass


class WrongHalfPlane(WDLError):
    pass


class AssemblyError(WDLError):
    pass


class InvariantViolation(WDLError):
    pass


class EigenSolverError(WDLError):
    pass


class EnvelopeExceeded(WDLError):
    pass


class SingularSystem(WDLError):
    pass


class InsufficientData(WDLError):
    category = "data"


class UnderResolved(WDLError):
    pass


class GeometryMismatch(WDLError):
    pass
