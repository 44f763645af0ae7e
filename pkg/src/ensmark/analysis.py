"""Closed-form ensemble-size trade-off calculators.

A per-key reweight promotes a green fraction gamma of the vocabulary with a
boost factor eps (1 < eps <= 1/gamma).  Stacking n layers promotes only the
intersection of the green sets, so the expected promoted mass is gamma^n and
the effective per-step score shift is (eps*gamma)^n.  Aggregating n keys gains
a factor n in the detection exponent, giving the trade-off

    g(n) = n * (eps*gamma)^(2n),   p_bound(n) = exp(-C * T * g(n)),

which is maximized near n* = 1 / (2 ln(1/(eps*gamma))).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EnsmarkError


class NoFiniteOptimumError(EnsmarkError):
    """eps*gamma >= 1 makes g(n) non-decreasing: no finite optimal ensemble size."""


@dataclass(frozen=True)
class SizeAnalysisParams:
    gamma: float
    eps: float
    length: int
    bound_constant: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 1.0 < self.eps <= 1.0 / self.gamma:
            raise ValueError("eps must lie in (1, 1/gamma]")
        if self.length < 1:
            raise ValueError("length must be at least 1")
        if self.bound_constant <= 0:
            raise ValueError("bound constant must be positive")


def promoted_mass(gamma: float, n: int) -> float:
    """Expected pre-boost mass landing in the n-fold green intersection."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    return gamma**n


def effective_shift(gamma: float, eps: float, n: int) -> float:
    """Per-step detector score shift of an n-layer ensemble: (eps*gamma)^n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return (eps * gamma) ** n


def tradeoff_g(gamma: float, eps: float, n: int) -> float:
    """Aggregation-gain vs promotion-sparsity trade-off n*(eps*gamma)^(2n)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return n * (eps * gamma) ** (2 * n)


def optimal_n(gamma: float, eps: float) -> float:
    """Real-valued maximizer of the trade-off: 1 / (2 ln(1/(eps*gamma)))."""
    x = eps * gamma
    if x >= 1.0:
        raise NoFiniteOptimumError("eps*gamma must be < 1 for a finite optimum")
    return 1.0 / (2.0 * math.log(1.0 / x))


def p_bound_curve(params: SizeAnalysisParams, n_max: int) -> list[tuple[int, float]]:
    """Detection p-value bound exp(-C*T*g(n)) for n = 1..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    return [
        (n, math.exp(-params.bound_constant * params.length
                     * tradeoff_g(params.gamma, params.eps, n)))
        for n in range(1, n_max + 1)
    ]


def analysis_rows(params: SizeAnalysisParams, n_max: int) -> list[dict]:
    """CSV-ready rows: n, promoted_mass, mu, g, p_bound."""
    rows = []
    for n, bound in p_bound_curve(params, n_max):
        rows.append(
            {
                "n": n,
                "promoted_mass": promoted_mass(params.gamma, n),
                "mu": effective_shift(params.gamma, params.eps, n),
                "g": tradeoff_g(params.gamma, params.eps, n),
                "p_bound": bound,
            }
        )
    return rows
