"""Exception taxonomy shared by all pipeline stages.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PipelineError):
    """Invalid configuration value, flag, or config file."""


class DataError(PipelineError):
    """Malformed, missing, or inconsistent input data."""


class DimensionError(DataError):
    """Array shapes incompatible with the requested operation."""


class NumericError(PipelineError):
    """Numerical failure: non-finite values, divergence, non-convergence."""


class TrainingDiverged(NumericError):
    """Cost became non-finite during training; carries the last good state."""

    def __init__(self, message, last_params=None, epoch=None):
        super().__init__(message)
        self.last_params = last_params
        self.epoch = epoch
