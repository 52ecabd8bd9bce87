"""Exception hierarchy shared by every module."""


class NehariError(Exception):
    """Base class for all library errors."""


class DomainError(NehariError, ValueError):
    """Argument outside the domain of a function (e.g. negative t)."""


class ConfigError(NehariError, ValueError):
    """Invalid grid, problem or run configuration."""


class HypothesisError(ConfigError):
    """The standing hypothesis or the growth conditions on phi are violated.

    ``which`` names the violated inequality.
    """

    def __init__(self, message, which=None):
        super().__init__(message)
        self.which = which


class OverflowBracketError(NehariError, OverflowError):
    """Bracket expansion left the representable range."""


class IllConditionedError(NehariError, ArithmeticError):
    """A sampled quotient came out non-finite."""


class DegenerateDirectionError(NehariError, ValueError):
    """The direction is identically zero."""


class NoProjectionError(NehariError):
    """The fibering map has no stationary point (both integrals <= 0)."""

    def __init__(self, message, case=None):
        super().__init__(message)
        self.case = case


class LambdaTooLargeError(NoProjectionError):
    """lambda * int a|u|^q >= max m_u: the two-root case collapsed."""


class BranchInfeasibleError(NehariError):
    """No restart produced an admissible starting direction for a branch."""


class DegenerateCertificateError(NehariError):
    """gamma''(1) lies in the zero band, the multiplier cannot be formed."""


class ConsistencyError(NehariError, AssertionError):
    """Internal consistency check failed (e.g. J(|u|) != J(u))."""
