"""Exception and warning types raised across the package."""


class RbmDuccError(Exception):
    """Base class for all package errors."""


class ParseError(RbmDuccError, ValueError):
    """Malformed FCIDUMP content."""


class FcidumpIndexError(ParseError, IndexError):
    """Integral index outside ``[1, NORB]``."""


class ConsistencyError(RbmDuccError, ValueError):
    """Two stored values that must agree by symmetry disagree."""


class DegeneracyError(RbmDuccError, ArithmeticError):
    """Perturbative denominator too close to zero."""


class InvalidGeneratorError(RbmDuccError, ValueError):
    pass


class NonCommutingError(RbmDuccError):
    pass


class ArityError(RbmDuccError, ValueError):
    pass


class HermiticityError(RbmDuccError, ValueError):
    pass


class AmbiguityError(RbmDuccError, ValueError):
    pass


class SectorError(RbmDuccError, ValueError):
    pass


class RankError(RbmDuccError, ValueError):
    pass


class PairingError(RbmDuccError, ValueError):
    pass


class EmptyTrainingError(RbmDuccError, ValueError):
    pass


class DivergenceError(RbmDuccError, FloatingPointError):
    pass


class ModeError(RbmDuccError, ValueError):
    pass


class ResourceError(RbmDuccError, MemoryError):
    pass


class ProtocolDegenerateWarning(UserWarning):
    """The construction loop was handed a state with no correlation content."""
