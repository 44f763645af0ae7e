import math

import pytest

from ensmark import (
    SizeAnalysisParams,
    effective_shift,
    optimal_n,
    p_bound_curve,
    promoted_mass,
    tradeoff_g,
)
from ensmark.analysis import NoFiniteOptimumError, analysis_rows


def test_promoted_mass_closed_form():
    assert promoted_mass(0.5, 1) == 0.5
    assert promoted_mass(0.5, 5) == pytest.approx(0.03125, rel=1e-15)
    assert promoted_mass(0.3, 3) == pytest.approx(0.027, rel=1e-12)


def test_effective_shift_closed_form():
    assert effective_shift(0.5, 1.8, 1) == pytest.approx(0.9, rel=1e-15)
    assert effective_shift(0.5, 1.8, 4) == pytest.approx(0.9**4, rel=1e-14)


def test_tradeoff_g_values():
    assert tradeoff_g(0.5, 1.8, 1) == pytest.approx(0.81, rel=1e-12)
    assert tradeoff_g(0.5, 1.8, 5) == pytest.approx(5 * 0.9**10, rel=1e-12)


def test_optimal_n_reference_point():
    assert optimal_n(0.5, 1.8) == pytest.approx(1 / (2 * math.log(1 / 0.9)), rel=1e-15)
    assert abs(optimal_n(0.5, 1.8) - 4.745) < 0.01


def test_integer_argmax_brackets_the_real_optimum():
    argmax = max(range(1, 21), key=lambda n: tradeoff_g(0.5, 1.8, n))
    assert argmax in (4, 5)


def test_g_is_unimodal():
    # differences change sign exactly once over a long horizon
    vals = [tradeoff_g(0.5, 1.8, n) for n in range(1, 101)]
    signs = [b > a for a, b in zip(vals, vals[1:])]
    flips = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    assert flips == 1
    assert signs[0] and not signs[-1]


def test_no_finite_optimum_when_shift_does_not_decay():
    with pytest.raises(NoFiniteOptimumError):
        optimal_n(0.5, 2.0)


def test_param_validation():
    with pytest.raises(ValueError):
        SizeAnalysisParams(gamma=0.0, eps=1.5, length=100)
    with pytest.raises(ValueError):
        SizeAnalysisParams(gamma=0.5, eps=1.0, length=100)
    with pytest.raises(ValueError):
        SizeAnalysisParams(gamma=0.5, eps=2.5, length=100)
    with pytest.raises(ValueError):
        SizeAnalysisParams(gamma=0.5, eps=1.8, length=0)
    with pytest.raises(ValueError):
        promoted_mass(0.5, 0)
    with pytest.raises(ValueError):
        effective_shift(0.5, 1.8, 0)


def test_p_bound_curve_matches_g():
    params = SizeAnalysisParams(gamma=0.5, eps=1.8, length=250)
    curve = p_bound_curve(params, 6)
    assert [n for n, _ in curve] == list(range(1, 7))
    for n, bound in curve:
        assert bound == pytest.approx(
            math.exp(-2.0 * 250 * tradeoff_g(0.5, 1.8, n)), rel=1e-12
        )


def test_analysis_rows_columns():
    params = SizeAnalysisParams(gamma=0.5, eps=1.8, length=250)
    rows = analysis_rows(params, 3)
    assert len(rows) == 3
    assert set(rows[0]) == {"n", "promoted_mass", "mu", "g", "p_bound"}
    assert rows[1]["mu"] == pytest.approx(0.81, rel=1e-12)
