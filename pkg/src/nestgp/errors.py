"""Exception hierarchy shared by every nestgp module."""


class NestGPError(Exception):
    """Base class for all errors raised by nestgp."""


class DomainError(NestGPError, ValueError):
    """An argument lies outside the domain of the function."""


class DimensionMismatch(NestGPError, ValueError):
    """Array shapes do not agree."""


class NotPositiveDefinite(NestGPError, ArithmeticError):
    """Cholesky failed for every jitter up to the allowed maximum."""


class DegenerateData(NestGPError, ValueError):
    """Outputs have (numerically) zero variance and cannot be standardized."""


class DegenerateSample(NestGPError, ValueError):
    """A sample used for correlation estimation has zero variance."""


class InsufficientSamples(NestGPError, ValueError):
    """Too few samples for the requested summary."""


class ConfigError(NestGPError, ValueError):
    """Inconsistent configuration."""


class ParseError(NestGPError, ValueError):
    """Malformed input file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateTimestamp(ParseError):
    """The same timestamp appears twice in a series."""


class ChainError(NestGPError, RuntimeError):
    """A numerical failure inside an MCMC chain, tagged with the iteration."""

    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause
