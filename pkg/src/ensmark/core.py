"""Vocabulary, token, and probability-distribution types shared by all modules.

Probabilities are 64-bit floats.  Distributions are validated at module
boundaries (non-negative, sum to 1 within SUM_TOLERANCE) and renormalized to
exact sum 1 after every reweight so that rounding never accumulates across
ensemble layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistributionError

SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TokenDistribution:
    """Probability vector over a vocabulary of size N."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        self.validate()

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    def validate(self) -> None:
        if self.probs.ndim != 1 or self.probs.shape[0] == 0:
            raise DegenerateDistributionError("probability vector must be 1-D and non-empty")
        if np.any(self.probs < 0):
            raise DegenerateDistributionError("negative probability entry")
        if abs(float(self.probs.sum()) - 1.0) > SUM_TOLERANCE:
            raise DegenerateDistributionError(
                f"probabilities sum to {float(self.probs.sum())!r}, expected 1"
            )

    def entropy(self) -> float:
        """Shannon entropy in nats, with 0 * log(0) taken as 0."""
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


def normalize(v) -> TokenDistribution:
    """Scale a non-negative vector to a valid distribution.

    Raises DegenerateDistributionError on negative entries or all-zero input.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise DegenerateDistributionError("input must be a 1-D non-empty vector")
    if np.any(arr < 0):
        raise DegenerateDistributionError("negative entry in input vector")
    total = float(arr.sum())
    if total <= 0:
        raise DegenerateDistributionError("all-zero input vector")
    return TokenDistribution(arr / total)


def entropy(d: TokenDistribution) -> float:
    return d.entropy()


@dataclass(frozen=True)
class TokenSequence:
    """Ordered token ids with a prompt prefix that detectors never score."""

    tokens: tuple[int, ...]
    prompt_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise ValueError("prompt_len must be within [0, len(tokens)]")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def generated(self) -> tuple[int, ...]:
        return self.tokens[self.prompt_len:]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.tokens, dtype=np.int64)


@dataclass(frozen=True)
class SecretKey:
    """16-byte opaque secret; accepted on the CLI as 32 hex characters."""

    data: bytes

    def __post_init__(self):
        if not isinstance(self.data, bytes) or len(self.data) != 16:
            raise ValueError("secret key must be exactly 16 bytes")

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        if len(text) != 32:
            raise ValueError("secret key hex string must have 32 characters")
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.data.hex()

    def words(self) -> tuple[int, int]:
        """The key as two little-endian 64-bit words (low half first)."""
        return (
            int.from_bytes(self.data[:8], "little"),
            int.from_bytes(self.data[8:], "little"),
        )
