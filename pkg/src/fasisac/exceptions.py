"""Exception types raised by the solvers and the experiment harness."""


class FasIsacError(Exception):
    """Base class for all errors raised by this package."""


class InfeasibleError(FasIsacError):
    """No point satisfies the constraints handed to a solver."""


class DegenerateDeltaError(FasIsacError):
    """The curvature bound of a position surrogate is zero."""


class NoFeasibleAngleError(FasIsacError):
    """Every candidate rotation of the linear array leaves the region."""


class ConfigError(FasIsacError):
    """Malformed experiment configuration."""
