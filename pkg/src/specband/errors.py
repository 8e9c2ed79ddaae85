"""Exception types raised across the package."""


class SpecbandError(Exception):
    """Base class for all package errors."""


class NoConvergence(SpecbandError):
    pass


class NonFiniteSample(SpecbandError):
    pass


class BasisMismatch(SpecbandError):
    pass


class DimensionMismatch(SpecbandError, ValueError):
    pass


class Singular(SpecbandError):
    pass


class SingularStencil(SpecbandError):
    """The anchored constraint system is singular at stencil column ``k``."""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"anchored stencil system is singular at column k={k}")


class InvalidConstraints(SpecbandError, ValueError):
    pass


class UnsupportedConstraint(SpecbandError, ValueError):
    pass


class UnliftableConstraints(SpecbandError):
    pass


class ExprSyntaxError(SpecbandError, SyntaxError):
    """Parse failure with the byte offset and the set of tokens that would have been accepted."""

    def __init__(self, message, offset, expected=()):
        expected = tuple(sorted(set(expected)))
        detail = f"{message} at byte {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)
        # SyntaxError.__init__ resets these
        self.msg = detail
        self.offset = offset
        self.expected = expected


class ProblemFileError(SpecbandError, ValueError):
    """Malformed problem file; ``line`` is 1-based (0 when not tied to a line)."""

    def __init__(self, message, line=0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)
