"""Exception hierarchy for eastlab."""


class EastLabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(EastLabError, ValueError):
    """Region, boundary or experiment configuration is invalid."""


class DomainError(EastLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SizeError(EastLabError, ValueError):
    """A region or state space exceeds a configured size cap."""


class NonErgodicError(EastLabError, ValueError):
    """A non-ergodic boundary condition was used where an ergodic one is required."""


class TruncationError(EastLabError, RuntimeError):
    """The distinguished zero left the simulated region."""


class StatisticalError(EastLabError, RuntimeError):
    """Not enough data to produce the requested estimate."""
