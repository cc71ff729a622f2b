"""Exact semilinear algebra over power series rings with Frobenius."""

from .errors import (
    BoundTooSmallError,
    IndeterminateError,
    NotInvertibleError,
    ParseError,
    PhimodError,
    PreconditionError,
    ResourceError,
)

__version__ = "0.1.0"

__all__ = [
    "BoundTooSmallError",
    "IndeterminateError",
    "NotInvertibleError",
    "ParseError",
    "PhimodError",
    "PreconditionError",
    "ResourceError",
    "__version__",
]
