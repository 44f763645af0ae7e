"""Keyed PRF, per-step watermark-key derivation, and the repeated-context history.

The PRF folds a word stream through SplitMix64: starting from state 0, each
64-bit word is absorbed by XOR into the state followed by one SplitMix64
advance; the final mixed output is the derived key.  For watermark keys the
stream is [sk word 0 (LE), sk word 1 (LE), member_index, token ids of the
context window].  The construction is bit-exact across platforms; golden
vectors live in ensmark/data/prf_test_vectors.json.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import SecretKey
from .errors import DuplicateKeyError

ContextWindow = tuple[int, ...]

DEFAULT_CONTEXT_WINDOW = 2


@dataclass(frozen=True)
class WatermarkKey:
    """Per-step pseudorandom key: an unsigned 64-bit seed."""

    seed: int

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)


def fold_stream(words) -> int:
    """Fold arbitrary 64-bit words through the SplitMix64 absorb chain."""
    arr = np.asarray([int(w) & 0xFFFFFFFFFFFFFFFF for w in words], dtype=np.uint64)
    return int(K.fold_words(arr))


def prf_derive(sk: SecretKey, ctx: ContextWindow, member_index: int = 0) -> WatermarkKey:
    """Watermark key for one (secret key, context, ensemble slot) triple.

    member_index is reserved for the distinct-hash-function key design; the
    distinct-secret-keys design always passes 0.
    """
    lo, hi = sk.words()
    return WatermarkKey(fold_stream([lo, hi, member_index, *ctx]))


def derive_all(sks: list[SecretKey], ctx: ContextWindow) -> list[WatermarkKey]:
    """One watermark key per secret key for the current context window.

    Secret keys must be pairwise distinct: key independence is what makes the
    ensemble unbiased.
    """
    if len(set(sk.data for sk in sks)) != len(sks):
        raise DuplicateKeyError("ensemble secret keys must be pairwise distinct")
    return [prf_derive(sk, ctx, 0) for sk in sks]


class ContextHistory:
    """Set of context windows already used to watermark within one run."""

    def __init__(self):
        self._seen: set[ContextWindow] = set()

    def check_and_record(self, ctx: ContextWindow) -> bool:
        """True iff ctx was seen before; records it when fresh."""
        ctx = tuple(int(t) for t in ctx)
        if ctx in self._seen:
            return True
        self._seen.add(ctx)
        return False

    def __len__(self) -> int:
        return len(self._seen)


def secret_key_from_seed(seed: int, index: int = 0) -> SecretKey:
    """Deterministic 16-byte secret key from a 64-bit seed (seed-tree helper)."""
    base = fold_stream([int(K.DOMAIN_SEED_TREE), seed, index])
    lo = int(K.stream_value(np.uint64(base), 1))
    hi = int(K.stream_value(np.uint64(base), 2))
    return SecretKey(lo.to_bytes(8, "little") + hi.to_bytes(8, "little"))
