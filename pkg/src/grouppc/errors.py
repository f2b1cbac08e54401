"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter value lies outside the domain of the requested quantity."""


class ConfigurationError(ValueError):
    """A model/design combination is internally inconsistent."""


class DataError(ValueError):
    """A dataset violates a structural requirement."""


class ParseError(DataError):
    """A data file could not be parsed; the message names row and column."""


class NumericError(RuntimeError):
    """A numeric routine failed (factorization, quadrature, root finding)."""
