"""Unit tests for the energy models and the block sampler."""

import math
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import pytest
from scipy.special import gamma

from eh_bounds.energy import (
    BlockStructure,
    Deterministic,
    EnergyModel,
    Exponential,
    TwoPoint,
    Uniform,
    model_from_spec,
    open_uniforms,
    sample_block_sequence,
    varrho,
)
from eh_bounds.errors import DomainError


@dataclass
class MomentCase:
    """Closed-form moments of one model."""

    name: str
    model: EnergyModel
    mean: float
    m2: float
    m3: float
    m3half: float


@pytest.mark.parametrize(
    "case",
    [
        MomentCase("deterministic", Deterministic(2.0), 2.0, 4.0, 8.0, 2.0**1.5),
        MomentCase("exponential", Exponential(2.0), 2.0, 8.0, 48.0, gamma(2.5) * 2.0**1.5),
        MomentCase("uniform", Uniform(1.0), 1.0, 4.0 / 3.0, 2.0, 2.0**1.5 / 2.5),
        MomentCase("two-point", TwoPoint(0.0, 2.0, 0.5), 1.0, 2.0, 4.0, 0.5 * 2.0**1.5),
    ],
    ids=lambda c: c.name,
)
def test_model_moments(case):
    # Assert
    assert math.isclose(case.model.mean, case.mean, rel_tol=1e-12)
    assert math.isclose(case.model.m2, case.m2, rel_tol=1e-12)
    assert math.isclose(case.model.m3, case.m3, rel_tol=1e-12)
    assert math.isclose(case.model.m3half, case.m3half, rel_tol=1e-12)


@pytest.mark.parametrize("model", [Exponential(1.5), Uniform(0.7)], ids=str)
def test_sample_mean_matches_model_mean(model):
    """Inversion sampling reproduces the mean."""
    # Arrange
    rng = np.random.Generator(np.random.Philox(key=11))

    # Act
    draws = model.sample(open_uniforms(rng, 200000))

    # Assert
    assert abs(draws.mean() - model.mean) < 5.0 * math.sqrt(model.m2 - model.mean**2) / math.sqrt(draws.size)


def test_two_point_lower_and_upper_quantiles_differ_at_the_atom():
    # Arrange
    model = TwoPoint(0.0, 3.0, 0.5)

    # Act & Assert
    assert float(model.quantile(0.5)) == 0.0
    assert float(model.upper_quantile(0.5)) == 3.0
    assert float(model.quantile(0.2)) == float(model.upper_quantile(0.2)) == 0.0
    assert model.atoms() == [(0.0, 0.5), (3.0, 0.5)]


def test_continuous_quantile_inverts_cdf():
    model = Exponential(1.0)
    u = np.array([0.01, 0.3, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(model.cdf(model.quantile(u)), u, rtol=1e-12)
    assert model.atoms() is None


@dataclass
class SpecCase:
    """model_from_spec input and outcome."""

    name: str
    spec: Dict[str, Any]
    expected_family: str = ""
    raises: bool = False


@pytest.mark.parametrize(
    "case",
    [
        SpecCase("deterministic", {"family": "deterministic", "params": {"P": 1.0}}, "deterministic"),
        SpecCase("two-point", {"family": "two-point", "params": {"e0": 0, "e1": 2, "p0": 0.3}}, "two-point"),
        SpecCase("unknown family", {"family": "gamma", "params": {"P": 1.0}}, raises=True),
        SpecCase("wrong params", {"family": "exponential", "params": {"mean": 1.0}}, raises=True),
        SpecCase("negative mean", {"family": "uniform", "params": {"P": -1.0}}, raises=True),
        SpecCase("bad two-point order", {"family": "two-point", "params": {"e0": 2, "e1": 1, "p0": 0.5}}, raises=True),
    ],
    ids=lambda c: c.name,
)
def test_model_from_spec(case):
    if case.raises:
        with pytest.raises(DomainError):
            model_from_spec(case.spec)
        return

    # Act
    model = model_from_spec(case.spec)

    # Assert
    assert model.family == case.expected_family
    assert model_from_spec(model.to_spec()).params() == model.params()


def test_zero_energy_model_is_flagged():
    model = Deterministic.zero_for_testing()
    assert model.mean == 0.0
    assert model.conforming is False
    assert Deterministic(1.0).conforming is True


def test_block_structure_indices():
    # Arrange
    blocks = BlockStructure(10, 4)

    # Assert
    assert blocks.num_blocks == 3
    assert blocks.block_lengths() == [4, 4, 2]
    assert [blocks.block_of(k) for k in (1, 4, 5, 8, 9, 10)] == [1, 1, 2, 2, 3, 3]
    assert blocks.block_start(3) == 9
    with pytest.raises(DomainError):
        BlockStructure(0, 4)


def test_varrho():
    assert varrho(Deterministic(1.0)) == 4.0
    assert varrho(Exponential(1.0)) == 6.0


def test_block_sequence_is_constant_within_blocks_and_reproducible():
    # Act
    first = sample_block_sequence(Exponential(1.0), 103, 10, seed=5)
    second = sample_block_sequence(Exponential(1.0), 103, 10, seed=5)

    # Assert
    assert first.shape == (103,)
    np.testing.assert_array_equal(first, second)
    for start in range(0, 103, 10):
        block = first[start : start + 10]
        assert np.all(block == block[0])
    assert len(np.unique(first)) == 11


def test_block_sequence_prefix_is_stable_in_n():
    """Block k always uses the k-th output of the stream."""
    short = sample_block_sequence(Uniform(1.0), 40, 4, seed=9)
    long = sample_block_sequence(Uniform(1.0), 400, 4, seed=9)
    np.testing.assert_array_equal(short, long[:40])


def test_block_sequence_rejects_negative_seed():
    with pytest.raises(DomainError):
        sample_block_sequence(Deterministic(1.0), 10, 2, seed=-1)
