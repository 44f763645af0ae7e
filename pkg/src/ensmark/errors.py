"""Exception types shared across the package."""


class EnsmarkError(Exception):
    """Base class for all ensmark errors."""


class DegenerateDistributionError(EnsmarkError):
    """Raised when a probability vector cannot be normalized (all zero / negative)."""


class DuplicateKeyError(EnsmarkError):
    """Raised when ensemble secret keys are not pairwise distinct."""


class TooSmallVocabError(EnsmarkError):
    """Raised when a keyed permutation is requested over fewer than 2 tokens."""


class EnumerationTooLargeError(EnsmarkError):
    """Raised when an exact-expectation enumeration would exceed the tuple budget."""


class PromptTooShortError(EnsmarkError):
    """Raised when a prompt is shorter than the context window."""


class NoScorableTokensError(EnsmarkError):
    """Raised when a sequence contains no positions a detector can score."""


class ConfigError(EnsmarkError):
    """Raised on malformed CLI / experiment configuration; carries the field name."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
