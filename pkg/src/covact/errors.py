"""Exception types shared across the package."""


class CovactError(Exception):
    """Base class for package errors."""


class NotPositiveDefinite(CovactError, ArithmeticError):
    """A Cholesky pivot was not strictly positive."""


class DimensionMismatch(CovactError, ValueError):
    pass


class SingularUpdate(CovactError, ArithmeticError):
    """A rank-one update would destroy positive definiteness."""


class DomainViolation(CovactError, ValueError):
    """A subproblem was evaluated where ``1 + d * gamma[j] <= 0``."""


class RootFindingFailure(CovactError, ArithmeticError):
    pass


class UnsupportedLayout(CovactError, ValueError):
    pass


class SchemaVersionMismatch(CovactError, ValueError):
    """Scenario file has the wrong magic header or an unknown version."""


class ScenarioIOError(CovactError, OSError):
    """Scenario file could not be read or written (missing, truncated, ...)."""
