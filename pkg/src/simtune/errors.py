"""Exception hierarchy.

The CLI maps these to exit codes: UsageError -> 1, DataError -> 2,
ProviderError -> 3.
"""


class SimtuneError(Exception):
    """Base class for all package errors."""


class UsageError(SimtuneError):
    """Bad flags, bad config values, misuse of the API surface."""


class DataError(SimtuneError):
    """Invalid or inconsistent data: corpora, artifacts, shapes, digests."""


class CorpusError(DataError):
    """Malformed or invalid corpus file."""


class MaskingError(DataError):
    """Lexing failure while masking code; carries the character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class PoolError(DataError):
    """Candidate pool too small for the requested curation parameters."""


class StaleArtifactError(DataError):
    """An artifact was derived from inputs whose digests no longer match."""


class MismatchError(DataError):
    """Two artifacts that must agree (model/index, dims) do not."""


class TemplateError(DataError):
    """Prompt template missing required placeholders or sections."""


class TrainingError(DataError):
    """Training aborted (non-finite loss or invalid configuration)."""


class ProviderError(SimtuneError):
    """Embedding provider transport failure after bounded retries."""


class ProviderIntegrityError(ProviderError):
    """Provider responded, but with the wrong count, dimension, or values."""
