"""Exception types shared across the package."""


class HamescError(Exception):
    """Base class for package errors."""


class UsageError(HamescError, ValueError):
    """A caller passed an argument outside an operation's contract."""


class DomainError(HamescError, ValueError):
    """An evaluation point lies outside the domain of a function."""


class SymbolRejected(HamescError):
    """Symbol failed validation; ``witness`` holds the offending sample."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class IntegrationError(HamescError):
    """Adaptive integration failed; carries the last accepted state."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class InsufficientData(HamescError):
    """Not enough trajectory tail to fit asymptotic rates."""


class ConfigError(HamescError):
    """Run configuration could not be parsed or validated."""
