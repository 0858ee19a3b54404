"""Exception hierarchy shared by the solvers, persistence layer and CLI."""


class DrwError(Exception):
    """Base class for all errors raised by drw_richards."""

    exit_code: int = 1


class ParameterError(DrwError, ValueError):
    """Invalid soil, solver or network parameters."""

    exit_code = 2


class ConfigurationError(DrwError, ValueError):
    """Malformed run configuration, unknown problem or missing artifact."""

    exit_code = 2


class GridError(ConfigurationError):
    """Grid construction failed."""


class SolverError(DrwError, RuntimeError):
    """Non-finite update or otherwise unusable iterate."""

    exit_code = 3


class ConvergenceError(SolverError):
    """A solve that was required to converge did not."""


class ArtifactError(DrwError, IOError):
    """Reading or writing a run artifact failed."""

    exit_code = 4


class CheckpointError(ArtifactError):
    """Checkpoint file is truncated, corrupt or of an unsupported version."""
