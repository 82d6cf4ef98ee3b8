"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes, so new failure modes should
subclass one of the existing categories instead of raising bare exceptions.
"""


class JoadaaError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(JoadaaError):
    """Invalid or missing configuration (CLI exit code 2)."""


class DegenerateGrammarError(JoadaaError):
    """Grammar cannot produce a non-empty timeline within the retry budget."""


class TrainingDivergedError(JoadaaError):
    """Non-finite loss encountered during training (CLI exit code 4)."""

    def __init__(self, message, step=None, head=None, batch_ids=None):
        super().__init__(message)
        self.step = step
        self.head = head
        self.batch_ids = batch_ids


class VersionMismatchError(JoadaaError):
    """Checkpoint/config format version mismatch (CLI exit code 5)."""
