"""Exception types. The CLI maps them onto exit codes."""


class CompatPriorError(Exception):
    """Base class for library errors."""


class DataError(CompatPriorError, ValueError):
    """Malformed or unusable input data."""


class SingularDesignError(DataError):
    """A design block is rank deficient."""


class DomainError(CompatPriorError, ValueError):
    """Argument outside the domain of a special function."""


class NumericalError(CompatPriorError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


class BracketingError(NumericalError):
    """No sign change found while bracketing a root."""


class ImproperPriorError(CompatPriorError, ValueError):
    """Operation undefined for an improper prior (or improper posterior)."""
