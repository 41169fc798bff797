"""Exception hierarchy; the CLI maps these onto exit codes."""


class IonQuenchError(Exception):
    exit_code = 3


class ConfigError(IonQuenchError, ValueError):
    exit_code = 2


class NumericalError(IonQuenchError):
    exit_code = 3


class CoincidentIonsError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class SaddleError(NumericalError):
    """Stationary point is not a minimum (negative Hessian eigenvalue)."""


class NearCriticalError(NumericalError):
    """Lowest mode below the validity bound; anharmonic corrections dominate."""


class MapError(NumericalError):
    """Bogoliubov map is ill-conditioned or violates its invariants."""


class KernelConditioningError(NumericalError):
    pass


class BranchTrackingError(NumericalError):
    """Square-root branch jumped between adjacent time samples."""


class TruncationError(NumericalError):
    """Fock truncation too small or too large for the requested state."""


class OracleMismatchError(IonQuenchError):
    exit_code = 4


class ChecksumMismatchError(IonQuenchError):
    """Re-derived outputs differ from a stored run record."""

    exit_code = 4
