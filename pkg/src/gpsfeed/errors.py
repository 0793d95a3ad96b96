"""Exception types raised across the pipeline."""


class PipelineError(Exception):
    """Base class. ``stage`` is filled in by the orchestrator when known."""

    exit_code = 1

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class InputError(PipelineError):
    exit_code = 3


class IoError(InputError):
    """A file could not be read or written."""

    def __init__(self, message: str, path=None, stage: str | None = None):
        super().__init__(message, stage)
        self.path = path


class SchemaError(InputError):
    pass


class ValidationError(InputError, ValueError):
    pass


class RejectRatioError(InputError):
    """Too many rows were rejected; usually a wrong field mapping."""


class IntegrityError(PipelineError):
    exit_code = 4


class ScenarioError(PipelineError, ValueError):
    """A synthetic scenario plan is infeasible."""
