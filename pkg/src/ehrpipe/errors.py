"""Exception hierarchy for the pipeline.

The CLI maps ConfigError to exit code 2, DataError (and OSError) to 3,
anything else to 4.
"""


class PipelineError(Exception):
    pass


class ConfigError(PipelineError):
    """Bad configuration or usage."""


class DataError(PipelineError):
    """Invalid or inconsistent input data."""


# --- codemap ---

class EmptyCodeError(DataError):
    pass


class MalformedCodeError(DataError):
    pass


class ConflictingMappingError(DataError):
    pass


class UnknownSystemTagError(DataError):
    pass


class SystemMismatchError(DataError):
    pass


# --- ingest ---

class MissingTableError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class TooManyBadRowsError(DataError):
    """Raised when the malformed-row fraction exceeds the tolerance."""

    def __init__(self, message, bad_rows=None):
        super().__init__(message)
        self.bad_rows = dict(bad_rows or {})


class InvalidConfigError(ConfigError):
    pass


# --- cohort ---

class UnknownTargetError(ConfigError):
    """Target CCS code absent from the concept map's range."""


class EmptyCohortError(DataError):
    pass


# --- promptgen ---

class MissingDescriptionError(DataError):
    pass


class DuplicateExampleIdError(DataError):
    pass


class EmptyVocabFileError(DataError):
    pass


# --- lrbaseline ---

class SingleClassError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


# --- metrics ---

class NoPositivesError(DataError):
    pass


class TooFewRunsError(DataError):
    pass


class MalformedPredictionFileError(DataError):
    pass
