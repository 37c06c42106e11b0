"""Exception hierarchy shared by all modules."""


class SimulationError(Exception):
    """Base class for every error raised by :mod:`sivsaw`."""


class InvalidParameterError(SimulationError, ValueError):
    pass


class DegeneracyError(SimulationError):
    """The two lowest levels are too close to define a qubit."""


class AmbiguousLabelError(SimulationError):
    """An eigenstate has no dominant spin projection."""


class OutOfRangeError(SimulationError):
    pass


class InconsistencyError(SimulationError):
    pass


class IntegratorError(SimulationError):
    """The master-equation integrator lost trace or otherwise failed."""


class StiffnessError(IntegratorError):
    """Step size underflow."""


class UnsupportedOverlapError(SimulationError):
    pass


class AlreadyCorrectedError(SimulationError):
    pass


class NormalizationError(SimulationError):
    pass


class FitError(SimulationError):
    pass


class NoOscillationError(FitError):
    pass


class DegenerateFitError(FitError):
    pass


class EdgePeakError(FitError):
    pass


class ConfigError(SimulationError):
    """Schema violation in an experiment config.

    ``field`` is the dotted path of the offending entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
