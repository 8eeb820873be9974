"""Exception hierarchy shared across the pipeline stages."""

from __future__ import annotations


class MshtmError(Exception):
    """Base class for every error raised by this package."""


class IngestionError(MshtmError):
    """A transcript file could not be read."""


class SchemaError(IngestionError):
    def __init__(self, column: str, path: str | None = None):
        self.column = column
        where = f" in {path}" if path else ""
        super().__init__(f"missing mapped column {column!r}{where}")


class CorpusParseError(IngestionError):
    def __init__(self, message: str, byte_offset: int):
        self.byte_offset = byte_offset
        super().__init__(f"{message} (at byte offset {byte_offset})")


class ConfigurationError(MshtmError):
    pass


class DimensionError(MshtmError):
    pass


class DegenerateInputError(MshtmError):
    pass


class ProviderError(MshtmError):
    """The embedding provider failed after exhausting its retry budget."""

    def __init__(self, message: str, last_status: int | None = None):
        self.last_status = last_status
        super().__init__(message)


class ProviderContractError(MshtmError):
    """The embedding provider returned data that violates the contract."""


class UndefinedTermError(MshtmError):
    pass


class PipelineError(MshtmError):
    """A stage failed; carries the stage name for the CLI message."""

    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
