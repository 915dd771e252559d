"""Exception hierarchy shared by every markset module."""


class MarksetError(Exception):
    """Base error for markset."""


class DomainError(MarksetError, ValueError):
    """An argument lies outside the documented domain."""


class DegenerateError(MarksetError, ArithmeticError):
    """A conditioning probability, variance or mean vanishes."""


class NoPairsError(DegenerateError):
    """No point pairs with joint membership at a requested lag."""

    def __init__(self, message: str, lags=None):
        super().__init__(message)
        self.lags = list(lags) if lags is not None else []


class EmbeddingError(MarksetError):
    """Circulant embedding is not nonnegative and no fallback applies."""

    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (most negative eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class VerificationError(MarksetError, AssertionError):
    """A numerical verification of a proven property failed."""


class ConfigError(MarksetError, ValueError):
    """Configuration is invalid."""
