"""Exception types raised by the sampler library."""


class HmalaError(Exception):
    """Base class for all library errors."""


class NonConvergence(HmalaError):
    """The symmetric eigensolver failed to converge."""


class NotPositiveDefinite(HmalaError):
    """A Cholesky pivot was non-positive or the matrix was not finite."""


class DimensionMismatch(HmalaError, ValueError):
    """A point or matrix has the wrong shape for the target."""


class OutOfSupport(HmalaError, ValueError):
    """Parameters lie outside the domain of a density."""


class BadInit(HmalaError, ValueError):
    """A chain was started at a point outside the target's support."""


class ZeroVariance(HmalaError, ValueError):
    """A series is constant, so its autocorrelation is undefined."""


class ConfigError(HmalaError, ValueError):
    """An experiment configuration failed validation."""
