"""Unbiased reweight strategies and their n-fold ensemble composition.

The base primitive is the permute-reweight: order the vocabulary by a keyed
pseudorandom permutation, clip the resulting CDF at alpha and at 1 - alpha,
and take the surviving increment of each token as its new mass.  Averaged
over uniformly random permutations this returns the input distribution
exactly, which the enumeration oracle `exact_expectation` checks.  The
gamma-reweight is the alpha = 0.5 special case.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import SecretKey, TokenDistribution
from .errors import DuplicateKeyError, EnumerationTooLargeError, TooSmallVocabError
from .keys import DEFAULT_CONTEXT_WINDOW, ContextWindow, WatermarkKey, derive_all

ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class DipReweight:
    """CDF-clipping permute-reweight with parameter alpha in (0, 0.5]."""

    alpha: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 0.5]")


def gamma_reweight() -> DipReweight:
    """The gamma-reweight strategy; identical machinery at alpha = 0.5."""
    return DipReweight(alpha=0.5)


ReweightStrategy = DipReweight  # extension slot: widen to a Union for new strategies


def keyed_permutation(key: WatermarkKey, n_vocab: int) -> np.ndarray:
    """Fisher-Yates shuffle of [0, N) driven by the SplitMix64 stream of `key`.

    Entry t is the original token index placed at permuted slot t.
    """
    if n_vocab < 2:
        raise TooSmallVocabError("keyed permutation needs a vocabulary of at least 2")
    return K.fisher_yates(np.uint64(key.seed), n_vocab)


def apply_reweight(
    strategy: ReweightStrategy, dist: TokenDistribution, key: WatermarkKey
) -> TokenDistribution:
    """One watermark layer: reweight `dist` under the permutation of `key`."""
    perm = keyed_permutation(key, dist.size)
    return TokenDistribution(K.dip_reweight_perm(dist.probs, perm, strategy.alpha))


def apply_reweight_perm(
    strategy: ReweightStrategy, dist: TokenDistribution, perm
) -> TokenDistribution:
    """Reweight under an explicitly given permutation (enumeration path)."""
    perm = np.asarray(perm, dtype=np.int64)
    return TokenDistribution(K.dip_reweight_perm(dist.probs, perm, strategy.alpha))


@dataclass(frozen=True)
class EnsembleConfig:
    """Base strategy, ensemble size, secret keys, and context window length."""

    strategy: ReweightStrategy
    secret_keys: tuple[SecretKey, ...]
    context_window: int = DEFAULT_CONTEXT_WINDOW

    def __post_init__(self):
        object.__setattr__(self, "secret_keys", tuple(self.secret_keys))
        if len(self.secret_keys) < 1:
            raise ValueError("ensemble needs at least one secret key")
        if len(set(sk.data for sk in self.secret_keys)) != len(self.secret_keys):
            raise DuplicateKeyError("ensemble secret keys must be pairwise distinct")
        if self.context_window < 1:
            raise ValueError("context window must be at least 1")

    @property
    def n(self) -> int:
        return len(self.secret_keys)

    def to_json(self) -> dict:
        return {
            "strategy": "dip",
            "alpha": self.strategy.alpha,
            "n": self.n,
            "secret_keys": [sk.hex() for sk in self.secret_keys],
            "context_window": self.context_window,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EnsembleConfig":
        if obj.get("strategy", "dip") != "dip":
            raise ValueError(f"unknown strategy {obj.get('strategy')!r}")
        keys = tuple(SecretKey.from_hex(h) for h in obj["secret_keys"])
        if "n" in obj and int(obj["n"]) != len(keys):
            raise ValueError("n does not match the number of secret keys")
        return cls(
            strategy=DipReweight(alpha=float(obj.get("alpha", 0.3))),
            secret_keys=keys,
            context_window=int(obj.get("context_window", DEFAULT_CONTEXT_WINDOW)),
        )


def ensemble_apply(
    cfg: EnsembleConfig, dist: TokenDistribution, ctx: ContextWindow
) -> TokenDistribution:
    """The n-fold ensemble transform: sequential fold of per-key reweights."""
    keys = derive_all(list(cfg.secret_keys), ctx)
    return ensemble_apply_keys(cfg.strategy, dist, keys)


def ensemble_apply_keys(
    strategy: ReweightStrategy, dist: TokenDistribution, keys: list[WatermarkKey]
) -> TokenDistribution:
    cur = dist
    for key in keys:
        cur = apply_reweight(strategy, cur, key)
    return cur


def exact_expectation(
    strategy: ReweightStrategy,
    dist: TokenDistribution,
    n: int,
    key_space: list,
) -> TokenDistribution:
    """Uniform average of the n-fold composition over every key tuple.

    For the permute-reweight the key space is a list of explicit permutations
    (normally all N! of them), injected directly instead of PRF keys: the
    PRF's 2^64 seeds cannot be enumerated, while unbiasedness is a statement
    about the uniform permutation distribution.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if len(key_space) ** n > ENUMERATION_BUDGET:
        raise EnumerationTooLargeError(
            f"{len(key_space)}^{n} key tuples exceed the {ENUMERATION_BUDGET} budget"
        )
    perms = [np.asarray(p, dtype=np.int64) for p in key_space]
    acc = np.zeros(dist.size, dtype=np.float64)
    count = 0
    for tup in itertools.product(perms, repeat=n):
        cur = dist.probs
        for perm in tup:
            cur = K.dip_reweight_perm(cur, perm, strategy.alpha)
        acc += cur
        count += 1
    return TokenDistribution(acc / count)


def all_permutations(n_vocab: int) -> list[tuple[int, ...]]:
    """Every permutation of [0, N); only sensible for tiny N."""
    return list(itertools.permutations(range(n_vocab)))
