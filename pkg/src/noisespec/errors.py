"""Exception types raised by the noisespec package."""


class NoiseSpecError(Exception):
    """Base class for all package-specific errors."""


class GridRangeError(NoiseSpecError, ValueError):
    """A frequency or time argument lies outside the supported range."""


class GridMismatchError(NoiseSpecError, ValueError):
    """An operation combining filters requires them to share one grid."""


class CalibrationError(NoiseSpecError, ValueError):
    """Amplitude calibration is impossible (all filter overlaps vanish)."""


class DegenerateBasisError(NoiseSpecError, ValueError):
    """The filter overlap matrix carries no usable eigenvalues."""


class IllConditionedInversionError(NoiseSpecError, ValueError):
    """A linear inversion is rank deficient beyond recovery."""

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class UndefinedFidelityError(NoiseSpecError, ValueError):
    """Fidelity is undefined because one argument has zero norm."""


class EmptyOperatorError(NoiseSpecError, ValueError):
    """All measurement probabilities were degenerate; no information left."""


class UnsupportedOracleError(NoiseSpecError, ValueError):
    """The time-domain cross-check requires an analytic spectral density."""


class DegenerateComponentsError(NoiseSpecError, ValueError):
    """The signal components are (numerically) proportional; the fit is singular."""


class UndefinedObjectiveError(NoiseSpecError, ValueError):
    """The control objective is undefined (identically zero filter)."""


class ConfigError(NoiseSpecError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, location=None):
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location
