"""Exception types shared across the toolkit."""


class ContractViolationError(ValueError):
    """An operation was called with arguments that violate its contract."""


class ConfigurationError(ValueError):
    """Invalid run configuration or dataset layout."""


class CorruptCheckpointError(ValueError):
    """Checkpoint file is malformed, truncated, or does not match the architecture."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


class ImageIOError(OSError):
    """An image file could not be read, decoded, or written."""
