"""Exception types raised across the package."""


class CranError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(CranError, ValueError):
    pass


class NotPositiveDefinite(CranError, ValueError):
    """A Cholesky pivot was not strictly positive."""


class NoSignChange(CranError, ValueError):
    """Bisection bracket does not straddle a root."""


class LineSearchFailed(CranError, RuntimeError):
    pass


class InfeasibleStart(CranError, ValueError):
    """Barrier method started outside the strict interior."""


class RankDeficient(CranError, ValueError):
    pass


class SelectionFailed(CranError, RuntimeError):
    pass


class TooLarge(CranError, ValueError):
    """Brute-force enumeration requested beyond its size limits."""


class InitializationFailed(CranError, RuntimeError):
    """No distortion level up to the cap satisfies the fronthaul limits."""


class Infeasible(CranError, ValueError):
    """Downlink distortion system is singular or yields non-positive levels."""


class SingularPsi(CranError, ValueError):
    pass


class NoFeasibleSolution(CranError, RuntimeError):
    pass


class NotInvertibleModQ(CranError, ValueError):
    pass


class ConfigError(CranError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(CranError, OSError):
    """Reading a config or writing an output file failed."""
