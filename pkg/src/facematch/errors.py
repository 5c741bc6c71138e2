"""Exception hierarchy shared by every facematch module."""

from __future__ import annotations


class FaceMatchError(Exception):
    """Base class for all library errors."""


class DimensionError(FaceMatchError, ValueError):
    """Two embeddings (or an embedding and a gallery) disagree on dimension."""

    def __init__(self, expected: int, actual: int, probe_index: int | None = None) -> None:
        self.expected = expected
        self.actual = actual
        self.probe_index = probe_index
        where = f" (probe {probe_index})" if probe_index is not None else ""
        super().__init__(f"dimension mismatch{where}: expected {expected}, got {actual}")


class FormatError(FaceMatchError):
    """A gallery file is malformed. ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class IoError(FaceMatchError, OSError):
    """Reading or writing a file failed."""

    def __init__(self, path, cause: BaseException) -> None:
        self.path = path
        self.cause = cause
        super().__init__(f"{path}: {cause}")


class ProviderError(FaceMatchError):
    """An embed provider could not produce an embedding for a face."""


class DecodeError(FaceMatchError):
    """An image file could not be decoded into a frame."""
