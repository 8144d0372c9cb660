"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an operation's preconditions are violated."""


class GenerationError(RuntimeError):
    """Raised when the procedural generator cannot satisfy a building spec."""


class CheckpointError(RuntimeError):
    """Raised for corrupt, missing, or mismatched checkpoint archives."""


class LoadError(RuntimeError):
    """Raised when a dataset record's files cannot be read."""


class ConfigError(ValueError):
    """Raised for invalid run configuration; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
