"""Self-test: golden-vector and exact-property conformance checks.

The golden vectors in ensmark/data/prf_test_vectors.json were computed once
with an independent scalar implementation of the SplitMix64 fold and the
seeded Fisher-Yates shuffle, and are frozen for cross-language conformance.
"""

from __future__ import annotations

import importlib.resources
import json
import math

import numpy as np

from .analysis import optimal_n, tradeoff_g
from .core import SecretKey, TokenDistribution
from .detect import PerKeyScore, p_value_single
from .keys import WatermarkKey, prf_derive
from .reweight import (
    DipReweight,
    all_permutations,
    apply_reweight_perm,
    exact_expectation,
    keyed_permutation,
)


def load_test_vectors() -> dict:
    path = importlib.resources.files("ensmark").joinpath("data/prf_test_vectors.json")
    return json.loads(path.read_text())


def run_selftest() -> list[tuple[str, bool, str]]:
    """Run all conformance checks; returns (name, passed, detail) triples."""
    checks: list[tuple[str, bool, str]] = []
    vectors = load_test_vectors()

    for i, vec in enumerate(vectors["prf"]):
        sk = SecretKey.from_hex(vec["sk_hex"])
        got = prf_derive(sk, tuple(vec["ctx"]), vec["member_index"]).seed
        want = int(vec["seed"])
        checks.append(
            (f"prf_vector_{i}", got == want, f"got {got:#x}, want {want:#x}")
        )

    for i, vec in enumerate(vectors["permutation"]):
        got = list(keyed_permutation(WatermarkKey(int(vec["key"])), int(vec["n"])))
        want = list(vec["perm"])
        checks.append((f"permutation_vector_{i}", got == want, f"got {got}, want {want}"))

    # reweight worked examples on the uniform distribution over 4 tokens
    uniform4 = TokenDistribution(np.full(4, 0.25))
    identity = np.arange(4)
    got = apply_reweight_perm(DipReweight(0.3), uniform4, identity).probs
    ok = np.allclose(got, [0.0, 0.2, 0.3, 0.5], atol=1e-15)
    checks.append(("dip_reweight_alpha_0.3", ok, f"got {got.tolist()}"))
    got = apply_reweight_perm(DipReweight(0.5), uniform4, identity).probs
    ok = np.allclose(got, [0.0, 0.0, 0.5, 0.5], atol=1e-15)
    checks.append(("gamma_reweight_alpha_0.5", ok, f"got {got.tolist()}"))

    # exact unbiasedness by permutation enumeration
    rng = np.random.default_rng(12345)
    perms = all_permutations(4)
    worst = 0.0
    for alpha in (0.3, 0.4, 0.5):
        for n in (1, 2):
            for _ in range(5):
                p = TokenDistribution(rng.dirichlet(np.ones(4)))
                avg = exact_expectation(DipReweight(alpha), p, n, perms)
                worst = max(worst, float(np.max(np.abs(avg.probs - p.probs))))
    checks.append(
        ("exact_unbiasedness_enumeration", worst <= 1e-12, f"max deviation {worst:.3e}")
    )

    # Hoeffding p-value closed form
    p = p_value_single(PerKeyScore(green_count=300, scored_tokens=500))
    ok = abs(p - math.exp(-10.0)) < 1e-18
    checks.append(("hoeffding_p_value", ok, f"got {p!r}"))

    # ensemble-size trade-off constants
    n_star = optimal_n(0.5, 1.8)
    ok = abs(n_star - 4.745) < 0.01 and max(range(1, 21), key=lambda n: tradeoff_g(0.5, 1.8, n)) in (4, 5)
    checks.append(("ensemble_size_optimum", ok, f"n*={n_star:.4f}"))

    return checks
