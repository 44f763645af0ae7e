"""Ensemble unbiased watermarking for language models.

Composes n independent keyed reweight layers per generation step so that the
expected output distribution equals the original model's, while the detector
aggregates per-key green-token scores into a single statistic with a
Hoeffding-bounded false-positive rate.
"""

from .analysis import (
    SizeAnalysisParams,
    effective_shift,
    optimal_n,
    p_bound_curve,
    promoted_mass,
    tradeoff_g,
)
from .core import SecretKey, TokenDistribution, TokenSequence, entropy, normalize
from .detect import (
    DetectionReport,
    PerKeyScore,
    aggregate_z,
    detect_ensemble,
    green_indicator,
    p_value_single,
    score_sequence,
    threshold_for_fpr,
)
from .generate import GenerationRecord, generate, generate_unwatermarked
from .harness import (
    AttackSpec,
    ExperimentSpec,
    apply_attack,
    run_null_calibration,
    run_power_sweep,
    run_unbiasedness_suite,
)
from .keys import ContextHistory, WatermarkKey, derive_all, prf_derive
from .lm import DistributionTrace, SyntheticLM, sample_token
from .reweight import (
    DipReweight,
    EnsembleConfig,
    apply_reweight,
    ensemble_apply,
    exact_expectation,
    gamma_reweight,
    keyed_permutation,
)

__version__ = "0.1.0"

__all__ = [
    "AttackSpec",
    "ContextHistory",
    "DetectionReport",
    "DipReweight",
    "DistributionTrace",
    "EnsembleConfig",
    "ExperimentSpec",
    "GenerationRecord",
    "PerKeyScore",
    "SecretKey",
    "SizeAnalysisParams",
    "SyntheticLM",
    "TokenDistribution",
    "TokenSequence",
    "WatermarkKey",
    "aggregate_z",
    "apply_attack",
    "apply_reweight",
    "derive_all",
    "detect_ensemble",
    "effective_shift",
    "ensemble_apply",
    "entropy",
    "exact_expectation",
    "gamma_reweight",
    "generate",
    "generate_unwatermarked",
    "green_indicator",
    "keyed_permutation",
    "normalize",
    "optimal_n",
    "p_bound_curve",
    "p_value_single",
    "prf_derive",
    "promoted_mass",
    "run_null_calibration",
    "run_power_sweep",
    "run_unbiasedness_suite",
    "sample_token",
    "score_sequence",
    "threshold_for_fpr",
    "tradeoff_g",
]
