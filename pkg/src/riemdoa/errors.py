"""Exception types raised across the package."""


class RiemdoaError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RiemdoaError, ValueError):
    pass


class NotPositiveDefinite(RiemdoaError, ValueError):
    pass


class NotHermitian(RiemdoaError, ValueError):
    pass


class NonFiniteEigenvalue(RiemdoaError, ArithmeticError):
    pass


class EmptyInput(RiemdoaError, ValueError):
    pass


class NotCommuting(RiemdoaError, ValueError):
    pass


class InvalidIndex(RiemdoaError, ValueError):
    pass


class NoConvergence(RiemdoaError, RuntimeError):
    """Karcher iteration hit ``max_iterations``.

    The last iterate is kept on ``self.mean`` so callers can still use it.
    """

    def __init__(self, message, mean=None, n_iter=None):
        super().__init__(message)
        self.mean = mean
        self.n_iter = n_iter


class NoConvergenceWarning(RuntimeWarning):
    pass


class InvalidWavelength(RiemdoaError, ValueError):
    pass


class ZeroReferenceEntry(RiemdoaError, ValueError):
    pass


class ZeroVector(RiemdoaError, ValueError):
    pass


class PositionOutsideRoom(RiemdoaError, ValueError):
    pass


class ConfigError(RiemdoaError, ValueError):
    pass


class BinOutOfRange(RiemdoaError, ValueError):
    pass


class SegmentTooShort(RiemdoaError, ValueError):
    pass


class InvalidSubspaceDim(RiemdoaError, ValueError):
    pass


class EmptyGrid(RiemdoaError, ValueError):
    pass


class GridTooCoarse(RiemdoaError, ValueError):
    pass


class AtfsNotOrthogonal(RiemdoaError, ValueError):
    pass


class WrongInterferenceCount(RiemdoaError, ValueError):
    pass
