"""Exception types raised across the package."""


class FKEITError(Exception):
    """Base class for all package errors."""


class AmbiguousProjection(FKEITError):
    pass


class EllipticityViolation(FKEITError):
    pass


class FactorizationFailure(FKEITError):
    pass


class StuckAtCorner(FKEITError):
    """A reflected point stayed outside the domain after two corrections; dt is too large."""


class HorizonExceeded(FKEITError):
    pass


class CalibrationDiverged(FKEITError):
    pass


class CompatibilityViolation(FKEITError):
    """Neumann data does not integrate to zero over the boundary."""


class MissingCollar(FKEITError):
    """The continuum representation needs a conductivity equal to 1 near the boundary."""


class LocalTimeExhausted(FKEITError):
    pass


class InsufficientData(FKEITError):
    pass


class SolverDiverged(FKEITError):
    pass


class ConfigError(FKEITError):
    pass
