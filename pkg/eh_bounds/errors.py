"""Exception types raised by the bound and simulation modules.

Out-of-range inputs raise ``DomainError`` (a ``ValueError``), so callers that
already catch ``ValueError`` keep working. A failed internal identity raises
``ConsistencyError``, which always indicates a bug rather than bad input.
"""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class InfeasibleTiltError(DomainError):
    """The Chernoff exponent has a nonpositive linear coefficient."""


class DivergentMomentError(DomainError):
    """The tilt is too large for the Gaussian moment generating terms."""


class UnsupportedModeError(DomainError):
    """The requested rate mode needs a continuous, strictly increasing cdf."""


class ConsistencyError(RuntimeError):
    """An event identity or an ordering that must hold was violated."""
