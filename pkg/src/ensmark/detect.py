"""Watermark detection: per-key green counting, ensemble aggregation, p-values.

Scoring is model-agnostic.  For each scorable position the detector re-derives
the watermark key from the preceding a-gram and checks whether the token falls
in the key's green half of the vocabulary (the last ceil(N/2) slots of the
keyed permutation, i.e. the region the reweight promotes).  Under the null the
green indicators are i.i.d. Bernoulli(1/2), so one-sided Hoeffding bounds give
exact false-positive control:

    single key:  p <= exp(-2 T s^2)
    ensemble:    p <= exp(-(2T/n) * s_ens^2),  s_ens = sum of per-key scores
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import SecretKey, TokenSequence
from .errors import NoScorableTokensError
from .keys import prf_derive
from .reweight import EnsembleConfig


@dataclass(frozen=True)
class PerKeyScore:
    green_count: int
    scored_tokens: int

    def __post_init__(self):
        if not 0 <= self.green_count <= self.scored_tokens:
            raise ValueError("green_count must lie in [0, scored_tokens]")

    @property
    def score(self) -> float:
        return self.green_count / self.scored_tokens - 0.5


@dataclass(frozen=True)
class DetectionReport:
    per_key: tuple[PerKeyScore, ...]
    s_ens: float
    p_single_best: float
    p_ens: float
    log_p_ens: float  # natural-log bound; immune to float underflow of p_ens
    threshold: float
    decision: bool
    aggregation: str = "sum"

    def to_json(self) -> dict:
        return {
            "per_key": [
                {"green_count": s.green_count, "scored_tokens": s.scored_tokens,
                 "score": s.score}
                for s in self.per_key
            ],
            "s_ens": self.s_ens,
            "p_single_best": self.p_single_best,
            "p_ens": self.p_ens,
            "log_p_ens": self.log_p_ens,
            "threshold": self.threshold,
            "decision": self.decision,
            "aggregation": self.aggregation,
        }


def green_indicator(token: int, key, n_vocab: int) -> bool:
    """True iff the token sits in the last ceil(N/2) permuted slots of `key`."""
    if not 0 <= token < n_vocab:
        raise ValueError("token id out of vocabulary range")
    pos = int(K.token_position(np.uint64(key.seed), n_vocab, token))
    return pos >= n_vocab - (n_vocab + 1) // 2


def score_sequence(
    seq: TokenSequence,
    sk: SecretKey,
    n_vocab: int,
    a: int = 2,
    skip_repeats: bool = False,
) -> PerKeyScore:
    """Green count for one secret key over every scorable position.

    A position is scorable when it is past the prompt and a full a-gram
    precedes it within the provided text.  With skip_repeats, positions whose
    context already occurred earlier in the scan are excluded (mirrors the
    generator's history bypass).
    """
    tokens = seq.as_array()
    start = max(seq.prompt_len, a)
    if start >= len(tokens):
        raise NoScorableTokensError("no position has both a full context and a token to score")
    lo, hi = sk.words()
    if not skip_repeats:
        green, scored = K.count_green(
            tokens, start, a, np.uint64(lo), np.uint64(hi), 0, n_vocab
        )
        return PerKeyScore(int(green), int(scored))
    seen: set[tuple[int, ...]] = set()
    green = 0
    scored = 0
    for t in range(start, len(tokens)):
        ctx = tuple(int(x) for x in tokens[t - a:t])
        if ctx in seen:
            continue
        seen.add(ctx)
        key = prf_derive(sk, ctx, 0)
        if green_indicator(int(tokens[t]), key, n_vocab):
            green += 1
        scored += 1
    if scored == 0:
        raise NoScorableTokensError("every scorable position was a repeated context")
    return PerKeyScore(green, scored)


def hoeffding_p(score: float, scored_tokens: int) -> float:
    """One-sided Hoeffding bound exp(-2 T s^2); non-positive scores give 1."""
    s = max(score, 0.0)
    return min(1.0, math.exp(-2.0 * scored_tokens * s * s))


def p_value_single(score: PerKeyScore) -> float:
    return hoeffding_p(score.score, score.scored_tokens)


def log_p_ensemble(s_ens: float, scored_tokens: int, n: int) -> float:
    s = max(s_ens, 0.0)
    return min(0.0, -(2.0 * scored_tokens / n) * s * s)


def threshold_for_fpr(fpr: float, scored_tokens: int, n: int) -> float:
    """Score threshold whose Hoeffding bound equals the target FPR."""
    if not 0.0 < fpr < 1.0:
        raise ValueError("fpr must lie in (0, 1)")
    return math.sqrt(n * math.log(1.0 / fpr) / (2.0 * scored_tokens))


def aggregate_z(per_key: list[PerKeyScore]) -> float:
    """Sum of scores standardized by the exact Bernoulli(1/2) null deviation."""
    if not per_key:
        raise ValueError("need at least one per-key score")
    t = per_key[0].scored_tokens
    if any(s.scored_tokens != t for s in per_key):
        raise ValueError("all per-key scores must share one scored-token count")
    total = sum(s.score for s in per_key)
    return total / (0.5 * math.sqrt(len(per_key) / t))


def detect_ensemble(
    seq: TokenSequence,
    cfg: EnsembleConfig,
    threshold: float | None = None,
    skip_repeats: bool = False,
    n_vocab: int | None = None,
    target_fpr: float | None = None,
) -> DetectionReport:
    """Score a sequence under every ensemble key and test s_ens >= threshold.

    Either a threshold or a target FPR (from which the analytic Hoeffding
    threshold is derived) must be supplied.
    """
    if n_vocab is None:
        raise ValueError("n_vocab is required for detection")
    per_key = tuple(
        score_sequence(seq, sk, n_vocab, cfg.context_window, skip_repeats)
        for sk in cfg.secret_keys
    )
    t = per_key[0].scored_tokens
    n = len(per_key)
    s_ens = sum(s.score for s in per_key)
    if threshold is None:
        if target_fpr is None:
            raise ValueError("supply either threshold or target_fpr")
        threshold = threshold_for_fpr(target_fpr, t, n)
    log_p = log_p_ensemble(s_ens, t, n)
    return DetectionReport(
        per_key=per_key,
        s_ens=s_ens,
        p_single_best=min(p_value_single(s) for s in per_key),
        p_ens=math.exp(log_p),
        log_p_ens=log_p,
        threshold=float(threshold),
        decision=s_ens >= threshold,
        aggregation="sum",
    )
