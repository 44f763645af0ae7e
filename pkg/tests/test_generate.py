import json

import numpy as np
import pytest

from ensmark import (
    DipReweight,
    DistributionTrace,
    EnsembleConfig,
    GenerationRecord,
    SyntheticLM,
    TokenDistribution,
    TokenSequence,
    generate,
    generate_unwatermarked,
)
from ensmark.errors import PromptTooShortError

from conftest import make_keys


def point_mass_trace(token, vocab, steps):
    p = np.zeros(vocab)
    p[token] = 1.0
    return DistributionTrace([TokenDistribution(p)] * steps)


def small_cfg(n=2, alpha=0.3, a=2):
    return EnsembleConfig(DipReweight(alpha), make_keys(n), context_window=a)


def test_deterministic_records():
    lm = SyntheticLM(lm_seed=5, vocab_size=64)
    prompt = TokenSequence((1, 2), prompt_len=2)
    a = generate(lm, small_cfg(), prompt, 40, rng_seed=9)
    b = generate(lm, small_cfg(), prompt, 40, rng_seed=9)
    assert a.to_jsonl() == b.to_jsonl()
    c = generate(lm, small_cfg(), prompt, 40, rng_seed=10)
    assert c.sequence != a.sequence


def test_record_shape():
    lm = SyntheticLM(lm_seed=5, vocab_size=64)
    rec = generate(lm, small_cfg(), TokenSequence((1, 2), 2), 30, rng_seed=0)
    assert len(rec.sequence) == 32
    assert rec.sequence.prompt_len == 2
    assert len(rec.watermarked_mask) == 30
    assert all(0 <= t < 64 for t in rec.sequence.tokens)


def test_point_mass_support_is_preserved():
    # reweighting never moves mass off the support, so a point-mass model
    # forces the same token with or without the watermark
    trace = point_mass_trace(3, vocab=8, steps=20)
    rec = generate(trace, small_cfg(), TokenSequence((0, 1), 2), 20, rng_seed=1)
    assert rec.sequence.generated == (3,) * 20


def test_repeated_context_bypasses_watermark():
    # a = 1 and a constant model: after two steps every context repeats
    trace = point_mass_trace(0, vocab=4, steps=10)
    cfg = small_cfg(a=1)
    rec = generate(trace, cfg, TokenSequence((2,), 1), 10, rng_seed=3)
    # step 0 sees ctx (2,), step 1 sees the fresh ctx (0,), the rest repeat
    assert rec.watermarked_mask == (True, True) + (False,) * 8


def test_preseed_history_skips_prompt_contexts():
    trace = point_mass_trace(2, vocab=4, steps=5)
    cfg = small_cfg(a=1)
    prompt = TokenSequence((2,), 1)
    rec = generate(trace, cfg, prompt, 5, rng_seed=0, preseed_history=True)
    # ctx (2,) was preseeded from the prompt, so step 0 is unwatermarked
    assert rec.watermarked_mask[0] is False


def test_unwatermarked_mask_all_false():
    lm = SyntheticLM(lm_seed=2, vocab_size=32)
    rec = generate_unwatermarked(lm, TokenSequence((1, 2), 2), 25, rng_seed=4)
    assert rec.watermarked_mask == (False,) * 25
    assert rec.config is None


def test_prompt_too_short():
    lm = SyntheticLM(lm_seed=2, vocab_size=32)
    with pytest.raises(PromptTooShortError):
        generate(lm, small_cfg(a=3), TokenSequence((1, 2), 2), 5, rng_seed=0)


def test_rejects_zero_length():
    lm = SyntheticLM(lm_seed=2, vocab_size=32)
    with pytest.raises(ValueError):
        generate(lm, small_cfg(), TokenSequence((1, 2), 2), 0, rng_seed=0)


def test_record_json_round_trip():
    lm = SyntheticLM(lm_seed=8, vocab_size=16)
    rec = generate(lm, small_cfg(), TokenSequence((3, 4), 2), 12, rng_seed=77)
    back = GenerationRecord.from_json(json.loads(rec.to_jsonl()))
    assert back == rec


def test_unwatermarked_record_round_trip():
    lm = SyntheticLM(lm_seed=8, vocab_size=16)
    rec = generate_unwatermarked(lm, TokenSequence((3, 4), 2), 6, rng_seed=1)
    back = GenerationRecord.from_json(json.loads(rec.to_jsonl()))
    assert back == rec


def test_watermark_changes_sampling():
    # same rng stream, watermark on vs off: outputs should diverge quickly
    lm = SyntheticLM(lm_seed=6, vocab_size=1000, peakedness=4.0)
    prompt = TokenSequence((5, 6), 2)
    w = generate(lm, small_cfg(n=5), prompt, 50, rng_seed=2)
    u = generate_unwatermarked(lm, prompt, 50, rng_seed=2)
    assert w.sequence.generated != u.sequence.generated
