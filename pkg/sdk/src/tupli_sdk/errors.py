"""SDK exceptions."""

from __future__ import annotations


class SdkError(Exception):
    """Base class for everything this package raises deliberately."""


class StorageError(SdkError):
    """A storage operation failed; carries the server's error triple."""

    def __init__(self, status: int, code: str, detail: str):
        super().__init__(f"{status} {code}: {detail}")
        self.status = status
        self.code = code
        self.detail = detail


class DuplicateBenchmark(StorageError):
    pass


class NotFoundError(StorageError):
    pass


class MissingArtifact(SdkError):
    """A deserialized benchmark references an artifact that is gone."""

    def __init__(self, artifact_id: str):
        super().__init__(f"artifact {artifact_id} referenced by benchmark is missing")
        self.artifact_id = artifact_id


class SerializationError(SdkError):
    pass


class FormatError(SdkError):
    """Columnar file does not conform to the export format."""
