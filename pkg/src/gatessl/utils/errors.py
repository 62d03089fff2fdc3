"""Custom exceptions for gatessl."""

from typing import Optional


class GateSSLError(Exception):
    """Base exception for all gatessl errors."""
    pass


class ConfigurationError(GateSSLError):
    """Raised for invalid configuration values or unknown keys."""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class AutogradError(GateSSLError):
    """Base class for errors raised by the tensor engine."""
    pass


class ShapeError(AutogradError):
    """Raised when operand shapes do not fit an op."""
    pass


class DegenerateInputError(AutogradError):
    """Raised for inputs an op is undefined on (zero-norm rows)."""
    pass


class NumericFaultError(AutogradError):
    """Raised when NaN or Inf shows up in debug mode or in the training loss."""
    pass


class GradientError(AutogradError):
    """Raised for invalid backward calls."""
    pass


class DataError(GateSSLError):
    """Raised for dataset-related errors."""
    pass


class DatasetFormatError(DataError):
    """Raised when a binary dataset file is malformed."""

    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        where = []
        if path:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CheckpointError(GateSSLError):
    """Raised for checkpoint read/write failures."""
    pass


class ArtifactMismatchError(CheckpointError):
    """Raised when a checkpoint does not match the expected format or model layout."""
    pass


class EvaluationError(GateSSLError):
    """Raised for invalid evaluation inputs."""
    pass


class StorageError(GateSSLError):
    """Raised for run-directory I/O errors."""
    pass
