"""Exception types raised across the toolkit."""


class CtrwLabError(Exception):
    pass


# symbols
class NonIntegrableMeasure(CtrwLabError, ValueError):
    pass


class QuadratureFailure(CtrwLabError, ArithmeticError):
    pass


class InsufficientGrid(CtrwLabError, ValueError):
    pass


class DegenerateTruncation(CtrwLabError, ValueError):
    pass


class RootNotBracketed(CtrwLabError, ArithmeticError):
    pass


# samplers
class UnsupportedSymbol(CtrwLabError, NotImplementedError):
    pass


class SeriesDivergence(CtrwLabError, ArithmeticError):
    pass


# paths
class JumpCountMismatch(CtrwLabError, ValueError):
    pass


class TooManyJumps(CtrwLabError, ValueError):
    pass


# ctrw
class ZeroProgress(CtrwLabError, RuntimeError):
    pass


class UnboundedSymbolRequired(CtrwLabError, ValueError):
    pass


class ModelInvalid(CtrwLabError, ValueError):
    """A space-time jump model fails its registration checks."""


# coupling
class MarginalMismatch(CtrwLabError, ArithmeticError):
    pass


class HorizonTooSmall(CtrwLabError, ValueError):
    pass


# harness
class ConfigInvalid(CtrwLabError, ValueError):
    pass


class EmptySample(CtrwLabError, ValueError):
    pass


class NonPositiveData(CtrwLabError, ValueError):
    pass
