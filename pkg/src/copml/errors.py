"""Exception hierarchy shared across the package."""


class CopmlError(Exception):
    """Base class for all errors raised by copml."""


class FieldError(CopmlError, ValueError):
    """Invalid prime, operand mismatch or out-of-range field value."""


class WrapAroundError(FieldError):
    """A signed value does not fit in the half-range of the field."""


class ScaleMismatchError(FieldError):
    """Two fixed-point operands carry incompatible scale exponents."""


class SharingError(CopmlError, ValueError):
    """Malformed secret sharing: too few shares, duplicate points, degree clash."""


class ThresholdError(CopmlError, ValueError):
    """A party-count condition of the protocol is violated."""


class TransportError(CopmlError, RuntimeError):
    """Misuse of the simulated network (unknown party, reused round tag, ...)."""


class ApproximationError(CopmlError, ValueError):
    """The sigmoid fit could not be computed reliably."""


class DatasetError(CopmlError, ValueError):
    """Malformed dataset file."""
