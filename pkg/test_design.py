"""Tests for design bookkeeping, plans and the sample-size search."""
import numpy as np
import pytest

from conftest import example_design, superiority_test
from trial_power.design import (
    Contrast,
    Plan,
    StratifiedDesign,
    TestSpec,
    allocation_pattern,
    bonferroni,
    brute_force_contrast_variance,
    contrast_variance,
    error_df,
    evaluate_plan,
    evaluate_test,
    gold_standard_overall,
    gold_standard_plan,
    scale_design,
    solve_sample_size,
)
from trial_power.errors import (
    EXIT_UNREACHABLE,
    DomainError,
    RankDeficiencyError,
    UnreachableTargetError,
    exit_code_for,
)
from trial_power.power_engine import Margins, WelchDesign


# =============================================================================
# Design and contrasts
# =============================================================================

def test_example_design_counts():
    d = example_design(6)
    assert (d.h, d.k_arms, d.K, d.r, d.q, d.n) == (4, 3, 2, 3, 1, 72)
    assert error_df(d) == (66, 67)
    np.testing.assert_array_equal(d.n_g, [24, 24, 24])


def test_default_coding_gives_each_stratum_a_parameter():
    d = StratifiedDesign(cell_counts=((3, 3), (3, 3), (3, 3)))
    assert d.r == 3
    np.testing.assert_array_equal(d.coding, [[0, 0], [1, 0], [0, 1]])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(cell_counts=((5, 5), (5, 0))),
        dict(cell_counts=((5,), (5,))),
        dict(cell_counts=((5, 5), (5,))),
        dict(cell_counts=((5, 5),), sigma=-1.0),
        dict(cell_counts=((5, 5),), q=-1),
        dict(cell_counts=((1, 1),)),
        dict(cell_counts=((4, 4), (4, 4)), stratum_coding=((1.0,), (1.0,))),
        dict(cell_counts=((4, 4), (4, 4)), stratum_coding=((0.0,),)),
    ],
)
def test_design_validation(kwargs):
    with pytest.raises(DomainError):
        StratifiedDesign(**kwargs)


def test_contrast_validation():
    with pytest.raises(DomainError):
        Contrast((1.0, 1.0, 0.0))
    with pytest.raises(DomainError):
        Contrast((0.0, 0.0))
    with pytest.raises(DomainError):
        Contrast((1.0,))
    assert Contrast((-0.5, -0.5, 1.0)).effect((0.0, 1.0, 1.1)) == pytest.approx(0.6)


def test_contrast_variance_balanced_designs():
    d = example_design(6)
    assert contrast_variance(d, Contrast((-1, 1, 0))) == pytest.approx(1 / 12, abs=1e-14)
    d3 = example_design(10)
    assert contrast_variance(d3, Contrast((-0.5, -0.5, 1))) == pytest.approx(0.0375, abs=1e-14)


def _random_design(rng):
    h = int(rng.integers(2, 6))
    arms = int(rng.integers(2, 5))
    counts = rng.integers(1, 6, size=(h, arms))
    if rng.random() < 0.5:
        return StratifiedDesign(cell_counts=tuple(map(tuple, counts)))
    n_indicators = int(rng.integers(1, h))
    trial_contrast = Contrast((-1.0, 1.0) + (0.0,) * (arms - 2))
    while True:
        coding = rng.integers(0, 2, size=(h, n_indicators)).astype(float)
        try:
            d = StratifiedDesign(
                cell_counts=tuple(map(tuple, counts)), stratum_coding=tuple(map(tuple, coding))
            )
            brute_force_contrast_variance(d, trial_contrast)
        except DomainError:
            continue
        return d


def test_contrast_variance_matches_explicit_design_matrix():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d = _random_design(rng)
        coeffs = rng.normal(size=d.k_arms)
        c = Contrast(tuple(coeffs - coeffs.mean()))
        assert contrast_variance(d, c) == pytest.approx(
            brute_force_contrast_variance(d, c), abs=1e-10
        )


def test_singular_indicator_names_the_column():
    d = StratifiedDesign(
        cell_counts=((4, 4), (4, 4), (4, 4)), stratum_coding=((0.0,), (0.0,), (0.0,))
    )
    with pytest.raises(RankDeficiencyError) as excinfo:
        contrast_variance(d, Contrast((-1, 1)))
    assert excinfo.value.columns == ("z1",)


# =============================================================================
# Multiplicity and plans
# =============================================================================

def test_bonferroni():
    assert bonferroni(0.025, 2) == 0.0125
    with pytest.raises(DomainError):
        bonferroni(0.025, 0)
    with pytest.raises(DomainError):
        bonferroni(0.6, 2)


def test_gold_standard_overall():
    assert gold_standard_overall(0.9929, 0.8641) == pytest.approx(0.8570, abs=1e-12)
    assert gold_standard_overall(0.3, 0.4) == 0.0
    with pytest.raises(DomainError):
        gold_standard_overall(1.2, 0.5)


def test_gold_standard_plan_reference_values():
    plan = gold_standard_plan(example_design(10), (0.0, 1.0, 1.1))
    assert plan.tests[1].contrast.coeffs == (-0.5, -0.5, 1.0)
    results = evaluate_plan(plan)
    assert [r.is_bound for r in results] == [False, False, True]
    assert results[0].power == pytest.approx(0.9929, abs=5e-5)
    assert results[1].power == pytest.approx(0.8641, abs=5e-5)
    assert results[1].v_l == pytest.approx(0.0375)
    assert results[2].power == pytest.approx(0.8570, abs=5e-5)


def test_plan_validation():
    d = example_design(6)
    with pytest.raises(DomainError):
        Plan(d, ())
    with pytest.raises(DomainError):
        Plan(d, (superiority_test((-1, 1), (0, 1)),))
    with pytest.raises(DomainError):
        Plan(d, (superiority_test((-1, 1, 0), (0, 1, 1)),), gold_standard=True)
    with pytest.raises(DomainError):
        superiority_test((-1, 1, 0), (0, 1))


def test_example1_powers_with_bonferroni_split():
    d = example_design(6)
    alpha = bonferroni(0.025, 2)
    results = evaluate_plan(
        Plan(
            d,
            (
                superiority_test((-1, 0, 1), (0, 0.6, 0.9), alpha),
                superiority_test((-1, 1, 0), (0, 0.6, 0.9), alpha),
            ),
        )
    )
    assert [r.power for r in results] == pytest.approx([0.7863, 0.4139], abs=5e-5)
    assert results[0].f == 66


def test_example2_equivalence_powers():
    d = example_design(30)
    margins = Margins.equivalence(-0.5, 0.5)
    mu = (0.0, 0.05, 0.1)
    powers = [
        evaluate_test(d, TestSpec(Contrast(c), margins, 0.0125, mu)).power
        for c in ((-1, 0, 1), (-1, 1, 0))
    ]
    assert powers == pytest.approx([0.7914, 0.8672], abs=5e-5)


def test_welch_designs_take_the_two_sample_contrast():
    d = WelchDesign(n0=20, n1=20, sigma0=1.0, sigma1=2.0)
    result = evaluate_test(d, superiority_test((-1, 1), (0.0, 1.2)))
    assert result.formula == "welch_sup_ni"
    with pytest.raises(DomainError):
        evaluate_test(d, superiority_test((1, -1), (0.0, 1.2)))


# =============================================================================
# Sample size
# =============================================================================

def test_allocation_pattern_and_scaling():
    d = example_design(6)
    assert allocation_pattern(d) == (1,) * 12
    assert scale_design(d, 4).cell_counts == ((4, 4, 4),) * 4
    welch = WelchDesign(n0=20, n1=40, sigma0=1.0, sigma1=1.0)
    assert allocation_pattern(welch) == (1, 2)
    assert (scale_design(welch, 7).n0, scale_design(welch, 7).n1) == (7, 14)


def test_sample_size_is_minimal():
    d = example_design(6)
    test = superiority_test((-1, 0, 1), (0, 0.6, 0.9), 0.0125)
    result = solve_sample_size(d, test, 0.9)
    assert result.power >= 0.9
    assert result.design.cell_counts == ((result.multiplier,) * 3,) * 4
    below = evaluate_test(scale_design(d, result.multiplier - 1), test).power
    assert below < 0.9


def test_sample_size_reaches_example_power_at_example_size():
    d = example_design(6)
    test = superiority_test((-1, 0, 1), (0, 0.6, 0.9), 0.0125)
    result = solve_sample_size(d, test, 0.78)
    assert result.multiplier == 6


def test_sample_size_at_and_just_above_achieved_power():
    d = example_design(6)
    test = superiority_test((-1, 0, 1), (0, 0.6, 0.9), 0.0125)
    achieved = evaluate_test(d, test).power
    assert solve_sample_size(d, test, achieved).multiplier == 6
    assert solve_sample_size(d, test, achieved + 1e-9).multiplier == 7


def test_higher_target_never_needs_fewer_subjects():
    d = example_design(6)
    test = superiority_test((-1, 1, 0), (0, 0.6, 0.9), 0.0125)
    multipliers = [
        solve_sample_size(d, test, target).multiplier for target in np.linspace(0.1, 0.95, 12)
    ]
    assert multipliers == sorted(multipliers)


def test_sample_size_unreachable_below_cap():
    d = StratifiedDesign(cell_counts=((1, 1), (1, 1)))
    test = superiority_test((-1, 1), (0.0, 1e-4))
    with pytest.raises(UnreachableTargetError) as excinfo:
        solve_sample_size(d, test, 0.999, cap=1000)
    assert excinfo.value.cap == 1000
    assert excinfo.value.power_at_cap < 0.999
    assert exit_code_for(excinfo.value) == EXIT_UNREACHABLE


def test_sample_size_target_must_exceed_alpha():
    d = example_design(6)
    test = superiority_test((-1, 1, 0), (0, 0.6, 0.9))
    with pytest.raises(DomainError):
        solve_sample_size(d, test, 0.02)
    with pytest.raises(DomainError):
        solve_sample_size(d, test, 1.0)
