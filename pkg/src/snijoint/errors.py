"""Exception hierarchy shared across the package."""


class SnijointError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(SnijointError):
    """A matrix required to be symmetric positive definite is not."""


class DomainError(SnijointError):
    """An argument lies outside the mathematical domain of an operation."""


class IntegrationFailure(SnijointError):
    """A quadrature did not reach the requested accuracy."""


class NumericalUnderflow(SnijointError):
    """A ratio or normalizer underflowed beyond recoverable asymptotics."""


class InvalidParams(SnijointError):
    """A parameter vector violates a structural constraint."""


class InadmissibleParams(InvalidParams):
    """Parameters give a non-positive conditional event variance."""


class DegenerateData(SnijointError):
    """A dataset cannot support initialization (all censored, rank-deficient design)."""


class DegenerateTrace(SnijointError):
    """A chain trace has no variation, so a diagnostic is undefined."""


class SchemaError(SnijointError):
    """A CSV file is missing required columns or has malformed values."""


class JoinError(SnijointError):
    """Longitudinal and survival tables do not match up by subject id."""


class MismatchedReplicates(SnijointError):
    """Model result tables do not cover identical replicate sets."""


class UsageError(SnijointError):
    """Bad command line arguments."""
