"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """An argument is outside the physical or mathematical domain of an operation."""


class ConfigError(ValueError):
    """A configuration file or deployment description is invalid."""


class ProtocolError(RuntimeError):
    """A rule attempted something the protocol forbids, e.g. transmitting on an
    infeasible link. Signals a bug in the calling rule, not bad user input."""


class NumericError(ArithmeticError):
    """A numeric computation produced non-finite values (divergence, overflow)."""
