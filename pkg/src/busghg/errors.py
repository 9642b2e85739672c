"""Exception types shared across the pipeline."""


class ConfigError(Exception):
    """A run configuration is invalid or references missing inputs (exit code 1)."""


class DataError(Exception):
    """Input data violates a stage contract (exit code 2)."""
