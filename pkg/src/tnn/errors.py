"""Exception taxonomy shared by all modules."""


class TnnError(Exception):
    """Base class for library errors."""


class DimensionError(TnnError, ValueError):
    """Operand shapes are incompatible."""


class IndexRangeError(TnnError, IndexError):
    """A mode index or multi-index is out of range."""


class ParameterError(TnnError, ValueError):
    """A configuration parameter is outside its admissible range."""


class PreconditionError(TnnError, ValueError):
    """A documented operation precondition does not hold for the inputs."""


class LookupError_(TnnError, KeyError):
    """An unknown name was requested (gallery entry, sphere program, ...)."""


class ConvergenceError(TnnError, RuntimeError):
    """An iterative procedure failed to converge.

    Carries the best iterate found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CertificateInfeasibleError(TnnError, RuntimeError):
    """A dual-certificate construction cannot proceed (e.g. divergent series)."""
