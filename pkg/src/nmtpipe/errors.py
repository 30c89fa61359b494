"""Exception types shared across the pipeline.

Each class maps to one CLI failure category so subcommands can exit with a
single-line diagnostic.
"""


class NmtError(Exception):
    """Base class for pipeline errors."""


class DataError(NmtError):
    """Malformed or empty corpus data."""


class ConfigError(NmtError):
    """Invalid configuration. Carries every problem found, not just the first."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericError(NmtError):
    """Non-finite values encountered during model computation."""


class CheckpointError(NmtError):
    """Unreadable, truncated, or version-incompatible checkpoint file."""
