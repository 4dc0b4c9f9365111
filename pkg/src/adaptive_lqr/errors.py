"""Exception types raised across the package."""


class AdaptiveLQRError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AdaptiveLQRError, ValueError):
    pass


class NonStabilizable(AdaptiveLQRError):
    """The Riccati iteration diverged, or the closed loop it yields is unstable."""


class NoConvergence(AdaptiveLQRError):
    """The Riccati iteration hit its iteration budget without settling."""


class Unstable(AdaptiveLQRError, ValueError):
    """A Lyapunov equation was posed with a non-contractive matrix."""


class InvalidDelta(AdaptiveLQRError, ValueError):
    pass


class NoFeasiblePoint(AdaptiveLQRError):
    """No stabilizable parameter could be found in the constraint set."""


class UnknownBenchmark(AdaptiveLQRError, KeyError):
    pass


class ConfigError(AdaptiveLQRError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ParseError):
    pass


class InvalidValue(ParseError):
    pass


class MalformedCsv(AdaptiveLQRError, ValueError):
    pass
