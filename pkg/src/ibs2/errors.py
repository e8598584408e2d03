"""Exception hierarchy shared by all ibs2 modules."""


class Ibs2Error(Exception):
    """Base class for library errors."""


class InvalidArgument(Ibs2Error, ValueError):
    pass


class SingularInput(Ibs2Error, ValueError):
    """Input hits a singular point of a kernel or map (e.g. x = y, |p| = 0)."""


class NumericFailure(Ibs2Error, RuntimeError):
    pass


class AssemblyFailure(NumericFailure):
    """Galerkin assembly did not converge under quadrature refinement."""


class EigenpairRejected(NumericFailure):
    """A computed eigenpair failed its residual gate."""


class CapTooSmall(NumericFailure):
    """Mode caps too small: a retained mode sits on the cap boundary."""


class DivergenceDetected(NumericFailure):
    """Forward Born recursion blew up."""

    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = nodes


class MeasureUndefined(Ibs2Error, ValueError):
    pass


class OutOfHypothesis(Ibs2Error, ValueError):
    """Bound requested outside the range where it was derived (e.g. k <= 1/2)."""


class ConfigError(Ibs2Error, ValueError):
    pass
