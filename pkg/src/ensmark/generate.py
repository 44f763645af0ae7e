"""Watermarked generation: the ensemble generator loop.

Each step keys the ensemble off the preceding a-gram.  A context window that
was already used within the run bypasses watermarking (the token is sampled
from the raw model distribution and flagged in the mask), which keeps
per-step keys independent despite repeated contexts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .core import TokenSequence
from .errors import PromptTooShortError
from .keys import ContextHistory
from .lm import DistributionTrace, SyntheticLM, sample_token
from .reweight import EnsembleConfig, ensemble_apply


@dataclass(frozen=True)
class GenerationRecord:
    """One generated sequence plus everything needed to reproduce or score it."""

    sequence: TokenSequence
    watermarked_mask: tuple[bool, ...]
    config: EnsembleConfig | None
    lm_descriptor: dict
    rng_seed: int

    def __post_init__(self):
        if len(self.watermarked_mask) != len(self.sequence) - self.sequence.prompt_len:
            raise ValueError("mask length must equal generated length")

    def to_json(self) -> dict:
        return {
            "tokens": list(self.sequence.tokens),
            "prompt_len": self.sequence.prompt_len,
            "mask": [bool(b) for b in self.watermarked_mask],
            "config": self.config.to_json() if self.config is not None else None,
            "seeds": {"rng_seed": self.rng_seed},
            "lm": self.lm_descriptor,
        }

    def to_jsonl(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationRecord":
        return cls(
            sequence=TokenSequence(tuple(obj["tokens"]), int(obj["prompt_len"])),
            watermarked_mask=tuple(bool(b) for b in obj["mask"]),
            config=EnsembleConfig.from_json(obj["config"]) if obj.get("config") else None,
            lm_descriptor=obj.get("lm", {}),
            rng_seed=int(obj["seeds"]["rng_seed"]),
        )


def generate(
    lm: SyntheticLM | DistributionTrace,
    cfg: EnsembleConfig,
    prompt: TokenSequence,
    length: int,
    rng_seed: int,
    preseed_history: bool = False,
) -> GenerationRecord:
    """Generate `length` watermarked tokens after `prompt`.

    With preseed_history, the prompt's own a-grams count as already seen,
    so the first occurrences of those contexts are not watermarked.
    """
    return _run(lm, cfg, prompt, length, rng_seed, watermark=True,
                preseed_history=preseed_history)


def generate_unwatermarked(
    lm: SyntheticLM | DistributionTrace,
    prompt: TokenSequence,
    length: int,
    rng_seed: int,
    context_window: int = 2,
) -> GenerationRecord:
    """Null-hypothesis twin of generate: never reweights, mask all false."""
    return _run(lm, None, prompt, length, rng_seed, watermark=False,
                context_window=context_window)


def _run(lm, cfg, prompt, length, rng_seed, watermark, context_window=None,
         preseed_history=False):
    if length < 1:
        raise ValueError("generation length must be at least 1")
    a = cfg.context_window if cfg is not None else context_window
    if len(prompt) < a:
        raise PromptTooShortError(
            f"prompt has {len(prompt)} tokens, context window needs {a}"
        )
    tokens = list(prompt.tokens)
    hist = ContextHistory()
    if preseed_history:
        for t in range(a, len(tokens) + 1):
            hist.check_and_record(tuple(tokens[t - a:t]))
    mask = []
    for step in range(length):
        ctx = tuple(tokens[-a:])
        dist = lm.next_distribution(ctx, step)
        if watermark and not hist.check_and_record(ctx):
            dist = ensemble_apply(cfg, dist, ctx)
            mask.append(True)
        else:
            mask.append(False)
        tokens.append(sample_token(dist, rng_seed, step))
    return GenerationRecord(
        sequence=TokenSequence(tuple(tokens), prompt_len=len(prompt)),
        watermarked_mask=tuple(mask),
        config=cfg,
        lm_descriptor=lm.to_json(),
        rng_seed=int(rng_seed),
    )
