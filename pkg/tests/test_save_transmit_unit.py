"""Unit tests for the save-and-transmit analysis."""

import math
from dataclasses import dataclass

import pytest

from eh_bounds.energy import Deterministic, Exponential, Uniform
from eh_bounds.errors import ConsistencyError, DivergentMomentError, DomainError, InfeasibleTiltError
from eh_bounds.gaussian import LOG2E, normal_inv_cdf
from eh_bounds.save_transmit import (
    Regime,
    achievable_log_M,
    block_chernoff_params,
    block_outage_bound,
    chernoff_outage_bound,
    design,
    limiting_saving_ratio,
    outage_bound,
    saving_length,
    second_order_lower,
    split_epsilon,
    symbol_chernoff_params,
    v_minus,
    v_minus_minus,
)


def test_achievable_log_M_at_median():
    """At eps2 = 1/2 only the capacity, log and kappa terms remain."""
    # Act
    report = achievable_log_M(1.0, 10000, 0.5)

    # Assert
    assert abs(report.second_order) < 1e-12
    assert abs(report.log_term + 0.5 * math.log2(10000)) < 1e-12
    assert abs(report.value - 4603.2) < 0.1
    assert report.feasible
    assert report.condition("normal_approximation").holds


def test_achievable_log_M_flags_short_blocklength():
    """The normal approximation margin fails for short codes."""
    report = achievable_log_M(1.0, 100, 0.1)
    assert not report.feasible
    assert report.violated() == ["normal_approximation"]


def test_chernoff_outage_bound_values():
    assert chernoff_outage_bound(1.0, 0.0, 0.5, 4, 10).raw == math.exp(-2.0)
    assert chernoff_outage_bound(1.0, 10.0, 1.0, 0, 100).reported == 1.0
    with pytest.raises(InfeasibleTiltError):
        chernoff_outage_bound(0.0, 1.0, 0.1, 10, 10)
    with pytest.raises(DomainError):
        chernoff_outage_bound(1.0, 1.0, 0.0, 10, 10)


def test_symbol_params_match_block_params_at_unit_coherence():
    # Arrange
    model = Exponential(1.0)

    # Act
    symbol = symbol_chernoff_params(model, 0.1)
    block = block_chernoff_params(model, 1, 0.1)

    # Assert
    assert symbol == block
    assert math.isclose(symbol.a_t, symbol.alpha_t)
    assert math.isclose(symbol.b_t, symbol.beta_t)


@pytest.mark.parametrize("t", [0.0, 0.125, 0.2])
def test_block_params_reject_tilt_outside_range(t):
    """The Gaussian moment diverges at t = 1/(2LP)."""
    with pytest.raises(DivergentMomentError):
        block_chernoff_params(Deterministic(1.0), 4, t)


@pytest.mark.parametrize("model,L", [(Deterministic(1.0), 1), (Exponential(1.0), 4), (Uniform(2.0), 8)], ids=str)
def test_beta_t_tends_to_beta_0(model, L):
    """The block quadratic coefficient is continuous at zero tilt."""
    params = block_chernoff_params(model, L, 1e-9)
    assert math.isclose(params.beta_t, params.beta_0, rel_tol=1e-6)


def test_block_params_at_reference_tilt():
    """Unit energy, unit coherence, t = 0.1."""
    params = block_chernoff_params(Deterministic(1.0), 1, 0.1)
    assert abs(params.alpha_t - 0.95) < 1e-12
    assert abs(params.beta_t - 1.9346) < 1e-4
    assert params.beta_0 == 1.0


def test_saving_length_reference_value():
    """Unit energy, L = 1, n = 100, eps1 = 1/2 saves for 34 uses."""
    # Act
    plan = saving_length(Deterministic(1.0), 1, 100, 0.5)

    # Assert
    assert abs(plan.t_n - 0.1) < 1e-12
    assert plan.m == 34


def test_block_outage_bound_uses_whole_blocks():
    # Arrange
    params = block_chernoff_params(Deterministic(1.0), 4, 0.05)

    # Act
    bound = block_outage_bound(params, 10, 9)

    # Assert
    expected = math.exp(-params.alpha_t * 0.05 * (2 - 1) + params.beta_t * 0.05**2 * 3)
    assert math.isclose(bound.raw, expected, rel_tol=1e-12)


def test_saving_length_infeasible_at_tilt_boundary():
    """t_n = 1/(2LP) exactly: no saving length exists."""
    # Act
    plan = saving_length(Deterministic(1.0), 4, 16, 0.5)

    # Assert
    assert plan.t_n == 0.125
    assert plan.m is None
    assert plan.params is None
    assert not plan.feasible
    assert plan.m_upper is None


@pytest.mark.parametrize("L", [1, 4])
@pytest.mark.parametrize("model", [Deterministic(1.0), Exponential(0.5)], ids=str)
def test_saving_length_meets_outage_target(model, L):
    """The Chernoff bound at t_n and m(n) is at most eps1."""
    # Arrange
    n, eps1 = 10000, 0.1

    # Act
    plan = saving_length(model, L, n, eps1)

    # Assert
    assert plan.m is not None
    assert outage_bound(model, L, plan.t_n, plan.m, n).reported <= eps1


def test_saving_length_ratio_converges():
    """m(n)/sqrt(n) approaches sqrt(varrho log2(1/eps1)) from above."""
    # Arrange
    model = Deterministic(1.0)
    limit = limiting_saving_ratio(model, 0.1)

    # Act
    deviations = [
        abs(saving_length(model, 1, n, 0.1).m / math.sqrt(n) - limit) / limit for n in (10**4, 10**5, 10**6)
    ]

    # Assert
    assert abs(limit - 3.6453) < 1e-3
    assert deviations[0] > deviations[1] > deviations[2]
    assert deviations[2] < 0.1


@dataclass
class SplitCase:
    """Error budget split."""

    eps: float
    eps1: float


@pytest.mark.parametrize(
    "case",
    [SplitCase(0.1, 0.05), SplitCase(0.3, 0.1), SplitCase(0.7, 0.2), SplitCase(0.5, 1e-9), SplitCase(0.99, 0.33)],
)
def test_split_epsilon_is_exact(case):
    assert case.eps1 + split_epsilon(case.eps, case.eps1) == case.eps


def test_split_epsilon_rejects_bad_budget():
    with pytest.raises(DomainError):
        split_epsilon(0.1, 0.1)


def test_design_combines_saving_and_message():
    # Act
    code = design(Deterministic(1.0), 1, 10000, 0.1, 0.05)

    # Assert
    assert code.eps1 + code.eps2 == 0.1
    assert code.m == saving_length(Deterministic(1.0), 1, 10000, 0.05).m
    assert code.total_length == 10000 + code.m
    assert math.isclose(code.rate, code.log_M / code.total_length)
    assert code.rate < 0.5
    assert [c.name for c in code.conditions][-1] == "normal_approximation"


def test_regime_validation():
    assert str(Regime.constant(4)) == "constant(L=4)"
    assert not Regime.growing().is_constant
    with pytest.raises(DomainError):
        Regime("constant")
    with pytest.raises(DomainError):
        Regime("linear")


def test_v_minus_growing_closed_form():
    """-C(P) sqrt(varrho log2(1/eps)) for the growing regime."""
    value = v_minus(Deterministic(1.0), Regime.growing(), 0.1)
    assert abs(value + 0.5 * math.sqrt(4.0 * math.log2(10.0))) < 1e-12


def test_v_minus_constant_is_above_every_split():
    """The supremum dominates any fixed split of eps."""
    # Arrange
    model, eps = Exponential(1.0), 0.1
    regime = Regime.constant(4)

    # Act
    best = v_minus(model, regime, eps)

    # Assert
    weight = math.sqrt(LOG2E**2 / (4 * 2.0))
    for eps1 in (0.001, 0.01, 0.05, 0.09):
        fixed_split = v_minus(model, Regime.growing(), eps1) + weight * normal_inv_cdf(eps - eps1)
        assert best >= fixed_split - 1e-9


def test_v_minus_constant_approaches_growing_for_long_coherence():
    """For very long coherence the constant-L bound meets the growing one from below."""
    # Arrange
    model, eps = Deterministic(1.0), 0.1

    # Act
    growing = v_minus(model, Regime.growing(), eps)
    constant = v_minus(model, Regime.constant(10**6), eps)

    # Assert
    assert constant <= growing + 1e-12
    assert abs(constant - growing) < 0.01


def test_v_minus_minus_domain():
    with pytest.raises(DomainError):
        v_minus_minus(Deterministic(1.0), Regime.growing(), 0.5)
    lower = second_order_lower(Deterministic(1.0), Regime.growing(), 0.6)
    assert lower.v_minus_minus is None


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.2, 0.4])
@pytest.mark.parametrize("regime", [Regime.growing(), Regime.constant(1), Regime.constant(8)], ids=str)
@pytest.mark.parametrize("model", [Deterministic(2.0), Exponential(0.5), Uniform(4.0)], ids=str)
def test_second_order_lower_ordering(model, regime, eps):
    # Act
    lower = second_order_lower(model, regime, eps)

    # Assert
    assert lower.v_minus_minus <= lower.v_minus


def test_consistency_error_is_a_runtime_error():
    assert issubclass(ConsistencyError, RuntimeError)
