"""Exception types shared across the package."""


class FlowmarchError(Exception):
    """Base class for all package-specific failures."""


class StageSolverError(FlowmarchError):
    """Newton iteration for an implicit stage failed to converge."""


class LinearSolverError(FlowmarchError):
    """A linear system was singular (or unusable) to working precision."""


class NumericError(FlowmarchError):
    """Non-finite values or other numeric breakdown during a computation."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class StiffnessError(NumericError):
    """Step-size underflow in an explicit adaptive integrator."""


class OutOfDomainError(FlowmarchError):
    """A state left the box a model was trained on."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ModelFormatError(FlowmarchError):
    """Model file is corrupt, truncated, or from an unknown format version."""


class ConfigError(FlowmarchError):
    """A config file or CLI argument set is invalid."""
