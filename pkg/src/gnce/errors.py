"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors -> 1, data errors -> 2,
resource errors -> 3.
"""

from __future__ import annotations


class GnceError(Exception):
    """Base class for all package-specific errors."""


class UsageError(GnceError):
    """Bad arguments or configuration supplied by the caller."""


class DataError(GnceError):
    """Malformed or inconsistent input data."""


class ResourceError(GnceError):
    """A bounded resource (retries, time, solution budget) was exhausted."""


class NTriplesParseError(DataError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class StoreFormatError(DataError):
    """A binary store file is not readable (bad magic, truncation, garbage)."""


class CorpusFormatError(DataError):
    """A JSON query corpus violates the schema.

    ``path`` points at the offending element, e.g. ``$[3].triples[0][2].kind``.
    """

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


class InvalidQueryError(DataError):
    """A query graph violates a structural invariant (empty, disconnected...)."""


class CanonicalisationError(UsageError):
    """Canonical form refused (too many variables)."""


class SamplingExhausted(ResourceError):
    """The sampler ran out of retries or eligible starting points."""


class CheckpointError(DataError):
    """A model checkpoint file is unreadable or inconsistent."""


class ConfigMismatchError(UsageError):
    """A checkpoint was loaded with incompatible expectations."""


class EmbeddingFormatError(DataError):
    """An embedding file (TSV or binary) is unreadable."""


class EstimatorError(UsageError):
    """An estimator refuses a query outside its supported fragment."""
