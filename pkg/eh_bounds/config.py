"""Run configuration: a JSON file validated by pydantic, plus overrides."""

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .energy import EnergyModel, model_from_spec
from .errors import DomainError
from .logs import get_logger
from .save_transmit import Regime

logger = get_logger(__name__)

WORKERS_ENV = "EH_BOUNDS_WORKERS"

COMMANDS = (
    "bounds",
    "second-order",
    "design",
    "linear-capacity",
    "outage-sim",
    "quantile-sim",
    "adaptive-sim",
    "selftest",
)
Command = Literal[
    "bounds",
    "second-order",
    "design",
    "linear-capacity",
    "outage-sim",
    "quantile-sim",
    "adaptive-sim",
    "selftest",
]

# Grid fields accept a scalar and are stored as lists.
GRID_FIELDS = ("n", "L", "eps", "eps1", "lam", "regime", "mode", "eta", "m")

# Execution-only settings, left out of the record written with the results.
RUNTIME_FIELDS = {"workers", "out", "format"}


class ModelSpec(BaseModel):
    """Energy model in its JSON form."""

    model_config = ConfigDict(extra="forbid")

    family: str
    params: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _builds(self) -> "ModelSpec":
        self.build()
        return self

    def build(self) -> EnergyModel:
        return model_from_spec({"family": self.family, "params": self.params})


DEFAULT_MODEL = ModelSpec(family="deterministic", params={"P": 1.0})


class RunConfig(BaseModel):
    """Everything a run needs: command, model, parameter grid and execution settings."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    command: Command = "bounds"
    model: ModelSpec = Field(default_factory=lambda: DEFAULT_MODEL.model_copy(deep=True))
    n: List[int] = Field(default_factory=lambda: [1000])
    L: List[int] = Field(default_factory=lambda: [1])
    eps: List[float] = Field(default_factory=lambda: [0.1])
    eps1: List[float] = Field(default_factory=lambda: [0.05])
    lam: List[float] = Field(default_factory=lambda: [1.0], alias="lambda")
    regime: List[Literal["growing", "constant"]] = Field(default_factory=lambda: ["growing"])
    mode: List[Literal["lower", "upper", "threshold"]] = Field(default_factory=lambda: ["threshold"])
    eta: List[float] = Field(default_factory=lambda: [0.05])
    m: List[int] = Field(default_factory=list)
    trials: int = 10000
    seed: int = 0
    workers: Optional[int] = None
    out: Optional[Path] = None
    format: Literal["csv", "json"] = "csv"

    @field_validator(*GRID_FIELDS, mode="before")
    @classmethod
    def _promote_scalar(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return list(value)
        return [value]

    @field_validator("n", "L")
    @classmethod
    def _positive_lengths(cls, values: List[int]) -> List[int]:
        for v in values:
            if v < 1:
                raise ValueError(f"Lengths must be >= 1: {v}")
        return values

    @field_validator("m")
    @classmethod
    def _nonnegative_saving(cls, values: List[int]) -> List[int]:
        for v in values:
            if v < 0:
                raise ValueError(f"Saving length must be >= 0: {v}")
        return values

    @field_validator("eps", "eps1")
    @classmethod
    def _probabilities(cls, values: List[float]) -> List[float]:
        for v in values:
            if not (0.0 < v < 1.0):
                raise ValueError(f"Probability outside (0, 1): {v}")
        return values

    @field_validator("lam")
    @classmethod
    def _fractions(cls, values: List[float]) -> List[float]:
        for v in values:
            if not (0.0 < v <= 1.0):
                raise ValueError(f"Fraction of blocklength outside (0, 1]: {v}")
        return values

    @field_validator("eta")
    @classmethod
    def _slack(cls, values: List[float]) -> List[float]:
        for v in values:
            if v < 0:
                raise ValueError(f"Slack must be nonnegative: {v}")
        return values

    @field_validator("trials")
    @classmethod
    def _trials(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"Trial count must be >= 1: {value}")
        return value

    @field_validator("seed")
    @classmethod
    def _seed(cls, value: int) -> int:
        if value < 0:
            raise ValueError(f"Seed must be nonnegative: {value}")
        return value

    @field_validator("workers")
    @classmethod
    def _workers(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError(f"Worker count must be >= 1: {value}")
        return value

    def energy_model(self) -> EnergyModel:
        return self.model.build()

    def regimes(self) -> List[Regime]:
        """Regimes of the grid; a constant regime is expanded over every ``L``."""
        result: List[Regime] = []
        for kind in self.regime:
            if kind == "constant":
                result.extend(Regime.constant(L) for L in self.L)
            else:
                result.append(Regime.growing())
        return result

    def record(self) -> Dict[str, Any]:
        """The resolved config as written next to the results."""
        return self.model_dump(mode="json", by_alias=True, exclude=RUNTIME_FIELDS)

    def record_json(self) -> str:
        return json.dumps(self.record(), sort_keys=True, separators=(",", ":"))


def parse_override(item: str) -> Tuple[List[str], Any]:
    """Split ``key.path=value``; the value is JSON when it parses as JSON.

    Raises:
        DomainError: If ``item`` has no ``=`` or an empty key
    """
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise DomainError(f"Override must look like key=value: {item!r}")
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(raw: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
    """Apply ``--set`` overrides in order to a raw config mapping."""
    for item in overrides:
        path, value = parse_override(item)
        target = raw
        for part in path[:-1]:
            nested = target.get(part)
            if not isinstance(nested, dict):
                nested = {}
                target[part] = nested
            target = nested
        target[path[-1]] = value
        logger.debug(f"Override {'.'.join(path)}={value!r}")
    return raw


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[List[str]] = None,
    command: Optional[str] = None,
) -> RunConfig:
    """Load, override and validate a run configuration.

    Args:
        path: JSON config file, or None for the defaults
        overrides: ``key=value`` strings applied after loading
        command: Subcommand forcing the ``command`` field

    Returns:
        The validated RunConfig

    Raises:
        OSError: If the file cannot be read
        DomainError: If the file is not a JSON object
        pydantic.ValidationError: If the result fails validation
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as e:
            raise DomainError(f"Config is not valid JSON: {path} ({e})") from e
        if not isinstance(loaded, dict):
            raise DomainError(f"Config must be a JSON object: {path}")
        raw = loaded
    raw.setdefault("model", DEFAULT_MODEL.model_dump())
    apply_overrides(raw, overrides or [])
    if command is not None:
        raw["command"] = command
    return RunConfig.model_validate(raw)


def resolve_workers(cli_workers: Optional[int], config: RunConfig) -> int:
    """Worker count: the flag, then the config, then the environment, then 1."""
    if cli_workers is not None:
        workers = cli_workers
    elif config.workers is not None:
        workers = config.workers
    else:
        env = os.environ.get(WORKERS_ENV, "").strip()
        try:
            workers = int(env) if env else 1
        except ValueError as e:
            raise DomainError(f"{WORKERS_ENV} must be an integer: {env!r}") from e
    if workers < 1:
        raise DomainError(f"Worker count must be >= 1: workers={workers}")
    return workers
