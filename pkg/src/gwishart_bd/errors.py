"""Exception hierarchy shared by all modules."""


class GWError(ValueError):
    """Base class for every error raised by the library."""


# graph
class IndexOutOfRange(GWError):
    pass


class SelfLoop(GWError):
    pass


class UnsupportedKind(GWError):
    pass


class TooFewVertices(GWError):
    pass


class EdgePresent(GWError):
    pass


class EdgeAbsent(GWError):
    pass


class NotDecomposable(GWError):
    pass


class Disconnected(GWError):
    pass


# special functions / constants
class NonPositiveDelta(GWError):
    pass


class NonPositiveShape(GWError):
    pass


class NegativeK(GWError):
    pass


class NonPositiveX(GWError):
    pass


class DeltaTooSmall(GWError):
    pass


class ZeroSamples(GWError):
    pass


class DimensionMismatch(GWError):
    pass


class NotPositiveDefinite(GWError):
    pass


class MissingFreeEntry(GWError):
    pass


class NonPositiveDiagonal(GWError):
    pass


# sampler
class NoConvergence(RuntimeError):
    pass


# bdmcmc
class SingularSubmatrix(GWError):
    pass


class NonPositiveA11(GWError):
    pass


class NoLegalMove(RuntimeError):
    pass


class EmptyTrace(GWError):
    pass


class ConfigError(GWError):
    pass
