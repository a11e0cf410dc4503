"""
Exception hierarchy shared by every mckean-lab module.
"""


class LabError(Exception):
    """Base class for all lab errors"""


class ConfigError(LabError, ValueError):
    """Bad, missing or inconsistent configuration"""


class DomainError(LabError, ValueError):
    """Point outside the state space, or wrong dimension"""


class UnsupportedModelError(LabError):
    """Operation is not defined for this model"""


class DependencyError(LabError):
    """A required upstream result is missing"""


# ==================== NUMERICAL FAILURES ====================
class NumericalError(LabError, ArithmeticError):
    """Base class for failures of a numerical scheme"""


class NumericalBlowupError(NumericalError):
    def __init__(self, message, particle_index=None):
        super().__init__(message)
        self.particle_index = particle_index


class StepSizeError(NumericalError):
    pass


class PositivityError(NumericalError):
    pass


class CoercivityError(NumericalError):
    pass


class MixingFailureError(NumericalError):
    pass


# ==================== PRECONDITIONS ====================
class PreconditionError(LabError, ValueError):
    """Input does not satisfy an operation's precondition"""


class WitnessIsMinimiserError(PreconditionError):
    pass


class MeanZeroError(PreconditionError):
    pass


class InsufficientReplicasError(PreconditionError):
    pass


class InsufficientDataError(PreconditionError):
    pass
