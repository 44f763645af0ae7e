"""Deterministic synthetic language models for desk-scale experiments.

SyntheticLM draws per-token logits from the keyed PRF stream and applies a
softmax, so the conditional distribution is an exact, reproducible function
of (lm_seed, context) with entropy controlled by the peakedness parameter.
DistributionTrace replays distributions from a JSONL file instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import TokenDistribution
from .keys import ContextWindow, fold_stream


@dataclass(frozen=True)
class SyntheticLM:
    """Autoregressive stand-in model: softmax of PRF-uniform logits.

    peakedness 0 gives the uniform distribution; larger values concentrate
    mass (logit_j = peakedness * u_j with u_j uniform on [0, 1)).
    """

    lm_seed: int
    vocab_size: int
    peakedness: float = 4.0

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        if self.peakedness < 0:
            raise ValueError("peakedness must be non-negative")

    def next_distribution(self, ctx: ContextWindow, step: int = 0) -> TokenDistribution:
        del step  # context-conditioned only
        ctx_arr = np.asarray(ctx, dtype=np.int64)
        probs = K.lm_distribution(
            np.uint64(self.lm_seed), ctx_arr, self.vocab_size, float(self.peakedness)
        )
        return TokenDistribution(probs)

    def to_json(self) -> dict:
        return {
            "kind": "synthetic",
            "seed": self.lm_seed,
            "vocab_size": self.vocab_size,
            "peakedness": self.peakedness,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SyntheticLM":
        return cls(
            lm_seed=int(obj["seed"]),
            vocab_size=int(obj["vocab_size"]),
            peakedness=float(obj.get("peakedness", 4.0)),
        )


class DistributionTrace:
    """File-backed distribution source: one {"probs": [...]} JSON object per line."""

    def __init__(self, distributions: list[TokenDistribution]):
        if not distributions:
            raise ValueError("trace must contain at least one distribution")
        sizes = {d.size for d in distributions}
        if len(sizes) != 1:
            raise ValueError("all trace distributions must share one vocabulary size")
        self._dists = list(distributions)
        self.vocab_size = distributions[0].size

    def __len__(self) -> int:
        return len(self._dists)

    @classmethod
    def load(cls, path) -> "DistributionTrace":
        dists = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                dists.append(TokenDistribution(np.asarray(json.loads(line)["probs"])))
        return cls(dists)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            for d in self._dists:
                fh.write(json.dumps({"probs": [float(p) for p in d.probs]}) + "\n")

    def next_distribution(self, ctx: ContextWindow, step: int) -> TokenDistribution:
        del ctx  # step-indexed only
        if step >= len(self._dists):
            raise IndexError(f"trace has {len(self._dists)} steps, requested {step}")
        return self._dists[step]

    def to_json(self) -> dict:
        return {"kind": "trace", "steps": len(self._dists), "vocab_size": self.vocab_size}


def sample_token(dist: TokenDistribution, rng_seed: int, step: int) -> int:
    """Inverse-CDF draw in token-id order using one PRF value for (seed, step).

    The cumulative compare is `u < cdf`, making the draw bit-exact
    reproducible for a given distribution.
    """
    u = fold_stream([int(K.DOMAIN_SAMPLE), rng_seed, step]) * 2.0**-64
    return int(K.inverse_cdf_sample(dist.probs, u))
