"""Unit tests for run configuration loading and overrides."""

import json
from dataclasses import dataclass
from typing import Any, List

import pytest
from pydantic import ValidationError

from eh_bounds.config import (
    RUNTIME_FIELDS,
    WORKERS_ENV,
    RunConfig,
    apply_overrides,
    load_config,
    parse_override,
    resolve_workers,
)
from eh_bounds.energy import Exponential
from eh_bounds.errors import DomainError


@pytest.fixture
def config_file(tmp_path):
    def write(content: Any) -> str:
        path = tmp_path / "run.json"
        path.write_text(content if isinstance(content, str) else json.dumps(content))
        return str(path)

    return write


def test_defaults():
    config = load_config()
    assert config.command == "bounds"
    assert config.model.family == "deterministic"
    assert config.n == [1000]
    assert config.format == "csv"


def test_scalars_promoted_to_lists():
    config = RunConfig.model_validate({"n": 500, "eps": 0.2, "regime": "constant"})
    assert config.n == [500]
    assert config.eps == [0.2]
    assert config.regime == ["constant"]


def test_lambda_alias(config_file):
    config = load_config(config_file({"command": "linear-capacity", "lambda": [0.4, 1.0]}))
    assert config.lam == [0.4, 1.0]
    assert config.record()["lambda"] == [0.4, 1.0]


@dataclass
class InvalidCase:
    """Config that must fail validation."""

    name: str
    raw: dict


@pytest.mark.parametrize(
    "case",
    [
        InvalidCase("unknown key", {"blocklength": 10}),
        InvalidCase("eps out of range", {"eps": 1.5}),
        InvalidCase("zero blocklength", {"n": [0, 10]}),
        InvalidCase("lambda above one", {"lambda": 1.2}),
        InvalidCase("unknown regime", {"regime": "shrinking"}),
        InvalidCase("unknown family", {"model": {"family": "pareto", "params": {"P": 1}}}),
        InvalidCase("bad family params", {"model": {"family": "exponential", "params": {"P": -1}}}),
        InvalidCase("negative seed", {"seed": -3}),
        InvalidCase("unknown format", {"format": "xml"}),
    ],
    ids=lambda c: c.name,
)
def test_invalid_configs_rejected(case):
    with pytest.raises(ValidationError):
        RunConfig.model_validate(case.raw)


def test_model_builds_energy_model(config_file):
    config = load_config(config_file({"model": {"family": "exponential", "params": {"P": 2.0}}}))
    model = config.energy_model()
    assert isinstance(model, Exponential)
    assert model.mean == 2.0


@dataclass
class OverrideCase:
    """A --set string and the path and value it parses to."""

    item: str
    path: List[str]
    value: Any


@pytest.mark.parametrize(
    "case",
    [
        OverrideCase("n=10000", ["n"], 10000),
        OverrideCase("eps=[0.1,0.5]", ["eps"], [0.1, 0.5]),
        OverrideCase("model.family=uniform", ["model", "family"], "uniform"),
        OverrideCase("model.params.P=2.5", ["model", "params", "P"], 2.5),
        OverrideCase('format="json"', ["format"], "json"),
    ],
    ids=lambda c: c.item,
)
def test_parse_override(case):
    assert parse_override(case.item) == (case.path, case.value)


def test_parse_override_requires_key():
    with pytest.raises(DomainError):
        parse_override("no-equals-sign")
    with pytest.raises(DomainError):
        parse_override("=3")


def test_overrides_apply_in_order_and_nest():
    raw = apply_overrides({"n": 5}, ["n=6", "n=7", "model.params.P=3"])
    assert raw == {"n": 7, "model": {"params": {"P": 3}}}


def test_override_merges_into_default_model():
    # Act
    config = load_config(overrides=["model.params.P=4"])

    # Assert
    assert config.model.family == "deterministic"
    assert config.model.params == {"P": 4}


def test_file_then_overrides_then_command(config_file):
    # Arrange
    path = config_file({"command": "design", "n": [100], "eps": 0.3})

    # Act
    config = load_config(path, ["n=[200,300]"], command="selftest")

    # Assert
    assert config.command == "selftest"
    assert config.n == [200, 300]
    assert config.eps == [0.3]


@pytest.mark.parametrize("content", ["{not json", "[1, 2]"])
def test_malformed_file_is_domain_error(config_file, content):
    with pytest.raises(DomainError):
        load_config(config_file(content))


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "absent.json")


def test_constant_regime_expands_over_coherence_times():
    config = RunConfig.model_validate({"regime": ["growing", "constant"], "L": [1, 16]})
    regimes = config.regimes()
    assert [r.kind for r in regimes] == ["growing", "constant", "constant"]


def test_record_excludes_runtime_fields(tmp_path):
    # Arrange
    config = RunConfig.model_validate({"workers": 4, "out": str(tmp_path / "x.csv"), "format": "json"})

    # Act
    record = config.record()

    # Assert
    assert RUNTIME_FIELDS.isdisjoint(record)
    assert json.loads(config.record_json()) == record


def test_record_independent_of_workers():
    a = RunConfig.model_validate({"workers": 1})
    b = RunConfig.model_validate({"workers": 8})
    assert a.record_json() == b.record_json()


@dataclass
class WorkersCase:
    """Worker count precedence."""

    name: str
    flag: Any
    configured: Any
    env: Any
    expected: int


@pytest.mark.parametrize(
    "case",
    [
        WorkersCase("flag wins", 3, 5, "7", 3),
        WorkersCase("config over env", None, 5, "7", 5),
        WorkersCase("env fallback", None, None, "7", 7),
        WorkersCase("default one", None, None, None, 1),
    ],
    ids=lambda c: c.name,
)
def test_resolve_workers(monkeypatch, case):
    # Arrange
    if case.env is None:
        monkeypatch.delenv(WORKERS_ENV, raising=False)
    else:
        monkeypatch.setenv(WORKERS_ENV, case.env)
    config = RunConfig.model_validate({"workers": case.configured})

    # Act & Assert
    assert resolve_workers(case.flag, config) == case.expected


@pytest.mark.parametrize("flag,env", [(0, None), (None, "many"), (None, "-2")])
def test_resolve_workers_rejects_bad_values(monkeypatch, flag, env):
    if env is None:
        monkeypatch.delenv(WORKERS_ENV, raising=False)
    else:
        monkeypatch.setenv(WORKERS_ENV, env)
    with pytest.raises(DomainError):
        resolve_workers(flag, RunConfig())
