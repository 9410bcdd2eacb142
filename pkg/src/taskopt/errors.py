"""Exception types shared across the pipeline."""


class TaskOptError(Exception):
    """Base class for every error raised by this package."""


class DataFormatError(TaskOptError):
    """An input file violates its documented schema."""


class ConfigError(TaskOptError):
    """A run configuration is invalid; the message lists every violation."""


class MissingArtifactError(TaskOptError):
    """A stage was run before the stage that produces its input artifact."""


class InsufficientTrialsError(TaskOptError):
    """A train pool has too few trials to split into train and validation."""


class TrainingDivergedError(TaskOptError):
    """A training run produced a non-finite loss."""
