class ConfigurationError(ValueError):
    """Raised when shapes, names or hyperparameters are inconsistent."""


class UsageError(RuntimeError):
    """Raised when an operation is called outside its contract."""
