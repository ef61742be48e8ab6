"""Exception hierarchy shared by every layer of the package."""


class FglabError(Exception):
    """Base class for all package errors."""


class ConfigError(FglabError):
    """A job configuration is malformed or out of the supported range."""


class RingMismatchError(FglabError):
    """Two operands live in different rings (or a map got the wrong domain)."""


class PrecisionError(FglabError):
    """A computation needs coefficients outside the tracked window.

    Raised when a Laurent support drops below the window floor, when a
    rationalized denominator exceeds its p-valuation cap, or when a series
    operation would need monomials beyond the truncation region.
    """


class ObstructionError(FglabError):
    """A solver found a genuine obstruction rather than a numerical failure."""

    def __init__(self, message, *, degree=None, stage=None):
        super().__init__(message)
        self.degree = degree
        self.stage = stage


class ReduciblePolynomialError(FglabError):
    """An extension step's defining polynomial failed its irreducibility check."""


class VerificationError(FglabError):
    """A posteriori identity check failed (an internal consistency bug)."""
