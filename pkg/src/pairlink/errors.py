"""Exception types raised across the package."""


class PairlinkError(Exception):
    """Base class for all package errors."""


class FormatError(PairlinkError):
    """An input file does not follow its declared format."""


class ValidationError(PairlinkError):
    """Input parsed fine but violates a data invariant."""


class MissingEntityError(PairlinkError, KeyError):
    """An entity has no inlink list or no usable embedding."""

    def __str__(self):
        return Exception.__str__(self)


class ContractViolation(PairlinkError, ValueError):
    """A function was called outside its precondition."""


class RefusalError(PairlinkError):
    """The request is well formed but deliberately declined (size guards, filters)."""
