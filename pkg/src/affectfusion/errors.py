"""Exception hierarchy shared by every pipeline stage."""


class AffectError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(AffectError, ValueError):
    """Malformed input, violated precondition or missing artifact."""


class NumericError(AffectError, ArithmeticError):
    """A numerical procedure failed (divergence, degenerate fit)."""
