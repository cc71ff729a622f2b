"""Error taxonomy.

Every failure mode a caller is expected to handle gets its own class, so the
CLI can map them onto distinct exit codes:

  * PreconditionError  -- the input violates a documented precondition
                          (includes BoundTooSmallError and parse errors);
  * ResourceError      -- an enumeration would exceed a configured cap;
  * IndeterminateError -- the tracked precision cannot decide the question
                          (never silently coerced to a boolean answer).
"""


class PhimodError(Exception):
    """Base class for all package errors."""


class PreconditionError(PhimodError):
    """An input violates a documented precondition."""


class NotInvertibleError(PreconditionError):
    """Element or matrix is not invertible in the requested ring.

    Carries the u-valuation obstruction when one is known: for series this is
    a list of (factor_index, first_unit_exponent_or_None) pairs.
    """

    def __init__(self, msg, obstruction=None):
        super().__init__(msg)
        self.obstruction = obstruction


class BoundTooSmallError(PreconditionError):
    """A certified-interiority bound was hit; retry with a larger bound."""


class ResourceError(PhimodError):
    """An enumeration exceeds a configured size cap."""


class IndeterminateError(PhimodError):
    """The tracked precision is insufficient to decide the question.

    `achieved` optionally records how far the computation got (an order, a
    trace, ...) so callers can report it.
    """

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class ParseError(PreconditionError):
    """Problem-file syntax or semantic error, with a 1-based location."""

    def __init__(self, msg, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            where = f"line {line}" if col is None else f"line {line}, col {col}"
            msg = f"{where}: {msg}"
        super().__init__(msg)
