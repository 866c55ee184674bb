"""Curiosity-driven exploration with a latent-predictive world model."""

from byol_explore.errors import ConfigurationError, UsageError

__all__ = ["ConfigurationError", "UsageError"]
__version__ = "0.1.0"
