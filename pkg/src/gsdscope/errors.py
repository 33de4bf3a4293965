"""Exception types shared by all gsdscope modules."""


class GsdError(Exception):
    """Base class for gsdscope errors."""


class DomainError(GsdError, ValueError):
    """An argument lies outside the physical domain of an operation."""


class QuantityParseError(GsdError, ValueError):
    """A quantity string could not be parsed.

    The offending token is stored in ``token``.
    """

    def __init__(self, message, token=None):
        super().__init__(message)
        self.token = token


class AccuracyError(GsdError, RuntimeError):
    """A numerical approximation would not meet its accuracy bound."""


class RankDeficiencyError(GsdError, RuntimeError):
    """The fit Jacobian is singular; ``pair`` names the degenerate parameters."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ConfigError(GsdError, ValueError):
    """Invalid run configuration; ``path`` points at the offending key."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
