"""Exception hierarchy shared across the package."""


class KsadaptError(Exception):
    """Base class for all errors raised by ksadapt."""


class DimensionMismatch(KsadaptError, ValueError):
    """Two objects disagree on the extent of a named axis."""

    def __init__(self, axis, expected=None, got=None):
        self.axis = axis
        self.expected = expected
        self.got = got
        msg = f"dimension mismatch on axis {axis!r}"
        if expected is not None:
            msg += f": expected {expected}, got {got}"
        super().__init__(msg)


class InvalidMask(KsadaptError, ValueError):
    pass


class BudgetExceedsGrid(InvalidMask):
    pass


class InvalidParams(KsadaptError, ValueError):
    pass


class UnknownPreset(InvalidParams):
    pass


class NonFiniteInput(KsadaptError, ValueError):
    pass


class MaxIterReached(KsadaptError, RuntimeError):
    """CG stopped at its iteration cap without meeting the tolerance.

    The best iterate and its relative residual are kept on the exception.
    """

    def __init__(self, residual, x=None, n_iter=None):
        self.residual = residual
        self.x = x
        self.n_iter = n_iter
        super().__init__(f"CG did not converge: relative residual {residual:.3e} after {n_iter} iterations")


class ContainerError(KsadaptError):
    pass


class BadMagic(ContainerError):
    pass


class UnsupportedVersion(ContainerError):
    pass


class TruncatedPayload(ContainerError):
    pass


class TooFewFrames(KsadaptError, ValueError):
    pass


class EmptyDictionary(KsadaptError, ValueError):
    pass


class ZeroNormTestFrame(KsadaptError, ValueError):
    pass


class IndexOutOfNeighborhoodRange(KsadaptError, IndexError):
    pass


class ZeroNormReference(KsadaptError, ValueError):
    pass


class RoiOutOfBounds(KsadaptError, ValueError):
    pass


class InvalidSpec(KsadaptError, ValueError):
    pass


class CGConvergenceWarning(RuntimeWarning):
    """Issued when CG returns its best iterate without meeting the tolerance."""


class RbIcdAborted(KsadaptError):
    """A reconstruction failed mid-optimization; ``trace`` holds the records so far."""

    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)
