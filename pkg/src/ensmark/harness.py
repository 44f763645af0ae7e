"""Experiment runner: null calibration, power sweeps, attacks, unbiasedness.

Every trial seed is derived from the master seed through a deterministic
tree (master -> cell -> trial), so serial and parallel execution produce
byte-identical outputs, and repeated runs of one spec are reproducible.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels as K
from .core import TokenDistribution, TokenSequence
from .detect import detect_ensemble, threshold_for_fpr
from .errors import ConfigError
from .generate import generate, generate_unwatermarked
from .keys import fold_stream, secret_key_from_seed
from .lm import SyntheticLM
from .reweight import (
    DipReweight,
    EnsembleConfig,
    all_permutations,
    ensemble_apply,
    exact_expectation,
)

# role words for the seed-derivation tree
_ROLE_CELL = 1
_ROLE_TRIAL = 2
_ROLE_RNG = 3
_ROLE_PROMPT = 4
_ROLE_ATTACK = 5
_ROLE_KEYS = 6

DEFAULT_FPR_TARGETS = (1e-3, 1e-4, 1e-5)
DEFAULT_P_CUTOFFS = (0.1, 0.01, 0.001)


def derive_seed(*words: int) -> int:
    return fold_stream([int(K.DOMAIN_SEED_TREE), *words])


@dataclass(frozen=True)
class AttackSpec:
    """Token-level perturbation applied to the scored (non-prompt) region."""

    kind: str = "none"  # none | random_replace | truncate
    rate: float = 0.0
    keep_fraction: float = 1.0
    attack_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "random_replace", "truncate"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("replacement rate must lie in [0, 1]")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must lie in (0, 1]")

    def label(self) -> str:
        if self.kind == "random_replace":
            return f"random_replace({self.rate})"
        if self.kind == "truncate":
            return f"truncate({self.keep_fraction})"
        return "none"

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "rate": self.rate,
            "keep_fraction": self.keep_fraction,
            "attack_seed": self.attack_seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AttackSpec":
        return cls(
            kind=obj.get("kind", "none"),
            rate=float(obj.get("rate", 0.0)),
            keep_fraction=float(obj.get("keep_fraction", 1.0)),
            attack_seed=int(obj.get("attack_seed", 0)),
        )


def apply_attack(seq: TokenSequence, spec: AttackSpec, n_vocab: int) -> TokenSequence:
    """Perturb the non-prompt region of a sequence per the attack spec."""
    if spec.kind == "none":
        return seq
    prompt = seq.tokens[: seq.prompt_len]
    body = list(seq.tokens[seq.prompt_len:])
    if spec.kind == "truncate":
        keep = math.ceil(spec.keep_fraction * len(body))
        return TokenSequence(prompt + tuple(body[:keep]), seq.prompt_len)
    for pos, tok in enumerate(body):
        u = fold_stream([int(K.DOMAIN_ATTACK), spec.attack_seed, pos, 0]) * 2.0**-64
        if u < spec.rate:
            body[pos] = fold_stream([int(K.DOMAIN_ATTACK), spec.attack_seed, pos, 1]) % n_vocab
    return TokenSequence(prompt + tuple(body), seq.prompt_len)


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid definition for power / null experiments."""

    lm: SyntheticLM
    alphas: tuple[float, ...] = (0.3,)
    ns: tuple[int, ...] = (1, 5)
    lengths: tuple[int, ...] = (250,)
    trials: int = 1000
    null_trials: int = 10000
    context_window: int = 2
    attack: AttackSpec = field(default_factory=AttackSpec)
    fpr_targets: tuple[float, ...] = DEFAULT_FPR_TARGETS
    p_cutoffs: tuple[float, ...] = DEFAULT_P_CUTOFFS
    master_seed: int = 0
    skip_repeats: bool = False

    def __post_init__(self):
        if self.trials < 1 or self.null_trials < 1:
            raise ValueError("trial counts must be positive")
        for q in tuple(self.fpr_targets) + tuple(self.p_cutoffs):
            if not 0.0 < q < 1.0:
                raise ValueError("FPR targets and p cutoffs must lie in (0, 1)")

    def to_json(self) -> dict:
        return {
            "lm": self.lm.to_json(),
            "alphas": list(self.alphas),
            "ns": list(self.ns),
            "lengths": list(self.lengths),
            "trials": self.trials,
            "null_trials": self.null_trials,
            "context_window": self.context_window,
            "attack": self.attack.to_json(),
            "fpr_targets": list(self.fpr_targets),
            "p_cutoffs": list(self.p_cutoffs),
            "master_seed": self.master_seed,
            "skip_repeats": self.skip_repeats,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        try:
            lm = SyntheticLM.from_json(obj["lm"])
        except KeyError as exc:
            raise ConfigError("lm", f"missing sub-field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError("lm", str(exc)) from exc
        try:
            return cls(
                lm=lm,
                alphas=tuple(float(a) for a in obj.get("alphas", [0.3])),
                ns=tuple(int(n) for n in obj.get("ns", [1, 5])),
                lengths=tuple(int(t) for t in obj.get("lengths", [250])),
                trials=int(obj.get("trials", 1000)),
                null_trials=int(obj.get("null_trials", 10000)),
                context_window=int(obj.get("context_window", 2)),
                attack=AttackSpec.from_json(obj.get("attack", {})),
                fpr_targets=tuple(float(q) for q in obj.get("fpr_targets", DEFAULT_FPR_TARGETS)),
                p_cutoffs=tuple(float(q) for q in obj.get("p_cutoffs", DEFAULT_P_CUTOFFS)),
                master_seed=int(obj.get("master_seed", 0)),
                skip_repeats=bool(obj.get("skip_repeats", False)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError("grid", str(exc)) from exc


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[dict]
    trial_records: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def csv_text(self) -> str:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row[c]) for c in self.columns))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.trial_records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fpr_column(q: float) -> str:
    return f"tpr_at_{q:g}"


def _cutoff_column(q: float) -> str:
    return f"fpr_at_p_{q:g}"


def worker_count() -> int:
    """Parallelism cap from ENSMARK_THREADS (0 = auto, unset = serial)."""
    raw = os.environ.get("ENSMARK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("ENSMARK_THREADS", f"not an integer: {raw!r}")
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _parallel_map(fn, items):
    """Order-preserving map; parallel iff ENSMARK_THREADS allows it."""
    workers = worker_count()
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (workers * 8))))


def _prompt_tokens(seed: int, a: int, n_vocab: int) -> TokenSequence:
    toks = tuple(
        fold_stream([int(K.DOMAIN_SEED_TREE), _ROLE_PROMPT, seed, i]) % n_vocab
        for i in range(a)
    )
    return TokenSequence(toks, prompt_len=a)


def _trial_config(trial_seed: int, alpha: float, n: int, a: int) -> EnsembleConfig:
    key_base = derive_seed(_ROLE_KEYS, trial_seed)
    sks = tuple(secret_key_from_seed(key_base, i) for i in range(n))
    return EnsembleConfig(DipReweight(alpha), sks, a)


def _power_trial(args) -> dict:
    (lm_json, alpha, n, length, a, attack_json, skip_repeats, trial_seed) = args
    lm = SyntheticLM.from_json(lm_json)
    cfg = _trial_config(trial_seed, alpha, n, a)
    prompt = _prompt_tokens(derive_seed(_ROLE_PROMPT, trial_seed), a, lm.vocab_size)
    rng_seed = derive_seed(_ROLE_RNG, trial_seed)
    rec = generate(lm, cfg, prompt, length, rng_seed)
    seq = rec.sequence
    attack = AttackSpec.from_json(attack_json)
    if attack.kind != "none":
        attack = AttackSpec(
            kind=attack.kind,
            rate=attack.rate,
            keep_fraction=attack.keep_fraction,
            attack_seed=derive_seed(_ROLE_ATTACK, trial_seed),
        )
        seq = apply_attack(seq, attack, lm.vocab_size)
    report = detect_ensemble(
        seq, cfg, threshold=0.0, skip_repeats=skip_repeats, n_vocab=lm.vocab_size
    )
    return {
        "s_ens": report.s_ens,
        "log_p_ens": report.log_p_ens,
        "scored": report.per_key[0].scored_tokens,
        "n": n,
    }


def _null_trial(args) -> dict:
    (lm_json, n, length, a, skip_repeats, trial_seed) = args
    lm = SyntheticLM.from_json(lm_json)
    cfg = _trial_config(trial_seed, 0.3, n, a)
    prompt = _prompt_tokens(derive_seed(_ROLE_PROMPT, trial_seed), a, lm.vocab_size)
    rng_seed = derive_seed(_ROLE_RNG, trial_seed)
    rec = generate_unwatermarked(lm, prompt, length, rng_seed, context_window=a)
    report = detect_ensemble(
        rec.sequence, cfg, threshold=0.0, skip_repeats=skip_repeats, n_vocab=lm.vocab_size
    )
    return {
        "s_ens": report.s_ens,
        "log_p_ens": report.log_p_ens,
        "scored": report.per_key[0].scored_tokens,
        "n": n,
    }


def run_power_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Watermark, optionally attack, detect: TPR@FPR and median p per cell."""
    columns = (
        ["alpha", "n", "T", "attack", "trials"]
        + [_fpr_column(q) for q in spec.fpr_targets]
        + ["median_p", "median_log_p", "mean_s_ens"]
    )
    result = ExperimentResult(columns=columns, rows=[])
    cell_index = 0
    for alpha in spec.alphas:
        for n in spec.ns:
            for length in spec.lengths:
                cell_seed = derive_seed(_ROLE_CELL, spec.master_seed, cell_index)
                cell_index += 1
                args = [
                    (
                        spec.lm.to_json(), alpha, n, length, spec.context_window,
                        spec.attack.to_json(), spec.skip_repeats,
                        derive_seed(_ROLE_TRIAL, cell_seed, i),
                    )
                    for i in range(spec.trials)
                ]
                outs = _parallel_map(_power_trial, args)
                row = _summarize_power_cell(spec, alpha, n, length, outs)
                result.rows.append(row)
                for i, out in enumerate(outs):
                    result.trial_records.append(
                        {"alpha": alpha, "n": n, "T": length,
                         "attack": spec.attack.label(), "trial": i, **out}
                    )
    return result


def _summarize_power_cell(spec, alpha, n, length, outs) -> dict:
    log_ps = np.array([o["log_p_ens"] for o in outs])
    s_vals = np.array([o["s_ens"] for o in outs])
    row = {
        "alpha": alpha,
        "n": n,
        "T": length,
        "attack": spec.attack.label(),
        "trials": len(outs),
    }
    for q in spec.fpr_targets:
        hits = sum(
            1 for o in outs
            if o["s_ens"] >= threshold_for_fpr(q, o["scored"], o["n"])
        )
        row[_fpr_column(q)] = hits / len(outs)
    med_log = float(np.median(log_ps))
    row["median_p"] = math.exp(med_log)
    row["median_log_p"] = med_log
    row["mean_s_ens"] = float(np.mean(s_vals))
    return row


def run_null_calibration(spec: ExperimentSpec) -> ExperimentResult:
    """Unwatermarked sequences detected with fresh keys: empirical FPR per cutoff."""
    columns = (
        ["n", "T", "trials"]
        + [_cutoff_column(q) for q in spec.p_cutoffs]
        + ["mean_s_ens"]
    )
    result = ExperimentResult(columns=columns, rows=[])
    min_cutoff = min(spec.p_cutoffs)
    if spec.null_trials * min_cutoff < 100:
        result.warnings.append(
            f"null_trials={spec.null_trials} resolves FPR {min_cutoff} with fewer "
            "than 100 expected events; estimates will be noisy"
        )
    cell_index = 0
    for n in spec.ns:
        for length in spec.lengths:
            cell_seed = derive_seed(_ROLE_CELL, spec.master_seed, 10_000 + cell_index)
            cell_index += 1
            args = [
                (
                    spec.lm.to_json(), n, length, spec.context_window,
                    spec.skip_repeats, derive_seed(_ROLE_TRIAL, cell_seed, i),
                )
                for i in range(spec.null_trials)
            ]
            outs = _parallel_map(_null_trial, args)
            log_ps = np.array([o["log_p_ens"] for o in outs])
            row = {"n": n, "T": length, "trials": len(outs)}
            for q in spec.p_cutoffs:
                row[_cutoff_column(q)] = float(np.mean(log_ps <= math.log(q)))
            row["mean_s_ens"] = float(np.mean([o["s_ens"] for o in outs]))
            result.rows.append(row)
            for i, out in enumerate(outs):
                result.trial_records.append(
                    {"n": n, "T": length, "trial": i, **out}
                )
    return result


def run_unbiasedness_suite(
    vocab_size: int = 4,
    alphas: tuple[float, ...] = (0.3, 0.4, 0.5),
    ns: tuple[int, ...] = (1, 2),
    n_distributions: int = 100,
    chi2_runs: int = 100_000,
    chi2_vocab: int = 16,
    seed: int = 0,
) -> dict:
    """Exact enumeration check of ensemble unbiasedness plus an end-to-end
    first-token chi-square against the unwatermarked generator."""
    if vocab_size > 5:
        raise ValueError("exact branch enumerates N! permutations; use N <= 5")
    rng = np.random.default_rng(seed)
    perms = all_permutations(vocab_size)
    max_dev = 0.0
    for alpha in alphas:
        strategy = DipReweight(alpha)
        for n in ns:
            for _ in range(n_distributions):
                p = TokenDistribution(rng.dirichlet(np.ones(vocab_size)))
                avg = exact_expectation(strategy, p, n, perms)
                max_dev = max(max_dev, float(np.max(np.abs(avg.probs - p.probs))))
    chi2_p = first_token_chi_square(
        vocab_size=chi2_vocab, runs=chi2_runs, seed=seed
    )
    return {
        "exact_max_deviation": max_dev,
        "chi_square_p": chi2_p,
        "exact_ok": max_dev <= 1e-12,
    }


def first_token_chi_square(
    vocab_size: int = 16,
    runs: int = 100_000,
    alpha: float = 0.3,
    n: int = 5,
    a: int = 2,
    peakedness: float = 4.0,
    seed: int = 0,
) -> float:
    """Two-sample chi-square p-value comparing the first watermarked token
    (fresh keys each run) against the unwatermarked generator's first token."""
    lm = SyntheticLM(lm_seed=derive_seed(7, seed), vocab_size=vocab_size,
                     peakedness=peakedness)
    prompt = _prompt_tokens(derive_seed(8, seed), a, vocab_size)
    ctx = tuple(prompt.tokens[-a:])
    base = lm.next_distribution(ctx, 0)
    counts_w = np.zeros(vocab_size, dtype=np.int64)
    counts_u = np.zeros(vocab_size, dtype=np.int64)
    from .lm import sample_token  # local import avoids a cycle at module load

    for i in range(runs):
        trial_seed = derive_seed(_ROLE_TRIAL, seed, i)
        cfg = _trial_config(trial_seed, alpha, n, a)
        dist_w = ensemble_apply(cfg, base, ctx)
        rng_seed = derive_seed(_ROLE_RNG, trial_seed)
        counts_w[sample_token(dist_w, rng_seed, 0)] += 1
        counts_u[sample_token(base, derive_seed(_ROLE_RNG, trial_seed, 1), 0)] += 1
    table = np.stack([counts_w, counts_u])
    keep = table.sum(axis=0) > 0
    _, p_value, _, _ = stats.chi2_contingency(table[:, keep])
    return float(p_value)


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("spec", f"invalid JSON: {exc}") from exc
    return ExperimentSpec.from_json(obj)
