"""Energy arrival models and the block-i.i.d. energy sampler.

Energy is harvested in blocks of ``L`` channel uses: the first symbol of each
block draws a fresh value from the model and the rest of the block repeats it.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple, Type

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import gamma

from .errors import DomainError
from .logs import get_logger

logger = get_logger(__name__)

# Smallest value substituted for an exact zero uniform draw.
_UNIFORM_FLOOR = 2.0**-54


class EnergyModel(ABC):
    """Distribution of the energy harvested at the start of a block.

    Subclasses supply closed-form moments, the cdf and the quantile function.
    Instances are immutable and can be shared between worker threads.
    """

    family: str = ""
    is_continuous: bool = False

    def __init__(self) -> None:
        self.conforming = True

    @property
    @abstractmethod
    def mean(self) -> float:
        """Mean energy per channel use (P)."""

    @property
    @abstractmethod
    def m2(self) -> float:
        """Second moment E[E^2]."""

    @property
    @abstractmethod
    def m3(self) -> float:
        """Third moment E[E^3]."""

    @property
    @abstractmethod
    def m3half(self) -> float:
        """Moment E[E^(3/2)]."""

    @abstractmethod
    def cdf(self, x: ArrayLike) -> np.ndarray:
        """Pr{E <= x}, elementwise."""

    @abstractmethod
    def quantile(self, u: ArrayLike) -> np.ndarray:
        """Lower quantile inf{x : F(x) >= u}, elementwise."""

    @abstractmethod
    def upper_quantile(self, u: ArrayLike) -> np.ndarray:
        """Upper quantile inf{x : F(x) > u}, elementwise."""

    @abstractmethod
    def params(self) -> Dict[str, float]:
        """Parameters in the JSON config form."""

    def atoms(self) -> Optional[List[Tuple[float, float]]]:
        """Support points and probabilities of a finitely supported model."""
        return None

    @property
    def m1(self) -> float:
        return self.mean

    def sample(self, uniforms: ArrayLike) -> np.ndarray:
        """Map uniforms in (0, 1) to energies by inversion."""
        return np.asarray(self.quantile(uniforms), dtype=np.float64)

    def to_spec(self) -> Dict[str, Any]:
        return {"family": self.family, "params": self.params()}

    def __str__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params().items())
        return f"{self.family}({args})"

    def __repr__(self) -> str:
        return f"<EnergyModel {self}>"


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be finite and > 0: {name}={value}")
    return value


class Deterministic(EnergyModel):
    """Every block harvests exactly ``P``."""

    family = "deterministic"

    def __init__(self, P: float):
        super().__init__()
        self.P = _positive("P", P)

    @classmethod
    def zero_for_testing(cls) -> "Deterministic":
        """Zero-energy model used to check the outage simulator.

        Violates ``P > 0`` and is marked non-conforming.
        """
        model = cls.__new__(cls)
        EnergyModel.__init__(model)
        model.P = 0.0
        model.conforming = False
        return model

    @property
    def mean(self) -> float:
        return self.P

    @property
    def m2(self) -> float:
        return self.P**2

    @property
    def m3(self) -> float:
        return self.P**3

    @property
    def m3half(self) -> float:
        return self.P**1.5

    def cdf(self, x: ArrayLike) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) >= self.P).astype(np.float64)

    def quantile(self, u: ArrayLike) -> np.ndarray:
        return np.full_like(np.asarray(u, dtype=np.float64), self.P)

    def upper_quantile(self, u: ArrayLike) -> np.ndarray:
        return self.quantile(u)

    def atoms(self) -> List[Tuple[float, float]]:
        return [(self.P, 1.0)]

    def params(self) -> Dict[str, float]:
        return {"P": self.P}


class Exponential(EnergyModel):
    """Exponentially distributed energy with mean ``P``."""

    family = "exponential"
    is_continuous = True

    def __init__(self, P: float):
        super().__init__()
        self.P = _positive("P", P)

    @property
    def mean(self) -> float:
        return self.P

    @property
    def m2(self) -> float:
        return 2.0 * self.P**2

    @property
    def m3(self) -> float:
        return 6.0 * self.P**3

    @property
    def m3half(self) -> float:
        return float(gamma(2.5)) * self.P**1.5

    def cdf(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0) / self.P), 0.0)

    def quantile(self, u: ArrayLike) -> np.ndarray:
        return -self.P * np.log1p(-np.asarray(u, dtype=np.float64))

    def upper_quantile(self, u: ArrayLike) -> np.ndarray:
        return self.quantile(u)

    def params(self) -> Dict[str, float]:
        return {"P": self.P}


class Uniform(EnergyModel):
    """Energy uniform on ``(0, 2P)``."""

    family = "uniform"
    is_continuous = True

    def __init__(self, P: float):
        super().__init__()
        self.P = _positive("P", P)

    def _raw_moment(self, k: float) -> float:
        return (2.0 * self.P) ** k / (k + 1.0)

    @property
    def mean(self) -> float:
        return self.P

    @property
    def m2(self) -> float:
        return self._raw_moment(2)

    @property
    def m3(self) -> float:
        return self._raw_moment(3)

    @property
    def m3half(self) -> float:
        return self._raw_moment(1.5)

    def cdf(self, x: ArrayLike) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=np.float64) / (2.0 * self.P), 0.0, 1.0)

    def quantile(self, u: ArrayLike) -> np.ndarray:
        return 2.0 * self.P * np.asarray(u, dtype=np.float64)

    def upper_quantile(self, u: ArrayLike) -> np.ndarray:
        return self.quantile(u)

    def params(self) -> Dict[str, float]:
        return {"P": self.P}


class TwoPoint(EnergyModel):
    """Energy ``e0`` with probability ``p0`` and ``e1 > e0`` otherwise."""

    family = "two-point"

    def __init__(self, e0: float, e1: float, p0: float):
        super().__init__()
        e0, e1, p0 = float(e0), float(e1), float(p0)
        if not (0.0 <= e0 < e1) or not math.isfinite(e1):
            raise DomainError(f"Two-point support needs 0 <= e0 < e1: e0={e0}, e1={e1}")
        if not (0.0 < p0 < 1.0):
            raise DomainError(f"Probability outside (0, 1): p0={p0}")
        self.e0, self.e1, self.p0 = e0, e1, p0
        self.p1 = 1.0 - p0

    def _raw_moment(self, k: float) -> float:
        return self.p0 * self.e0**k + self.p1 * self.e1**k

    @property
    def mean(self) -> float:
        return self._raw_moment(1)

    @property
    def m2(self) -> float:
        return self._raw_moment(2)

    @property
    def m3(self) -> float:
        return self._raw_moment(3)

    @property
    def m3half(self) -> float:
        return self._raw_moment(1.5)

    def cdf(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.where(x < self.e0, 0.0, np.where(x < self.e1, self.p0, 1.0))

    def quantile(self, u: ArrayLike) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return np.where(u <= self.p0, self.e0, self.e1)

    def upper_quantile(self, u: ArrayLike) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        return np.where(u < self.p0, self.e0, self.e1)

    def atoms(self) -> List[Tuple[float, float]]:
        return [(self.e0, self.p0), (self.e1, self.p1)]

    def params(self) -> Dict[str, float]:
        return {"e0": self.e0, "e1": self.e1, "p0": self.p0}


FAMILIES: Dict[str, Type[EnergyModel]] = {
    Deterministic.family: Deterministic,
    Exponential.family: Exponential,
    Uniform.family: Uniform,
    TwoPoint.family: TwoPoint,
}


def model_from_spec(spec: Mapping[str, Any]) -> EnergyModel:
    """Build a model from ``{"family": ..., "params": {...}}``.

    Raises:
        DomainError: For an unknown family or bad parameters
    """
    family = spec.get("family")
    if family not in FAMILIES:
        known = ", ".join(sorted(FAMILIES))
        raise DomainError(f"Unknown energy family: {family!r} (expected one of {known})")
    params = dict(spec.get("params") or {})
    try:
        return FAMILIES[family](**params)
    except TypeError as e:
        raise DomainError(f"Bad parameters for {family}: {params} ({e})") from e


@dataclass(frozen=True)
class BlockStructure:
    """Blocklength ``n`` split into energy blocks of ``L`` channel uses."""

    n: int
    L: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.L < 1:
            raise DomainError(f"Need n >= 1 and L >= 1: n={self.n}, L={self.L}")

    def block_start(self, ell: int) -> int:
        """One-based index of the first channel use of block ``ell``."""
        if ell < 1:
            raise DomainError(f"Block index must be >= 1: ell={ell}")
        return (ell - 1) * self.L + 1

    def block_of(self, k: int) -> int:
        """One-based block index containing channel use ``k``."""
        if k < 1:
            raise DomainError(f"Channel use index must be >= 1: k={k}")
        return (k - 1) // self.L + 1

    @property
    def num_blocks(self) -> int:
        return -(-self.n // self.L)

    def block_lengths(self) -> List[int]:
        lengths = [self.L] * (self.n // self.L)
        if self.n % self.L:
            lengths.append(self.n % self.L)
        return lengths


def varrho(model: EnergyModel) -> float:
    """``2 (E[E^2] / P^2 + 1)``."""
    return 2.0 * (model.m2 / model.mean**2 + 1.0)


def open_uniforms(rng: np.random.Generator, size: Any = None) -> np.ndarray:
    """Uniform draws in the open interval (0, 1).

    One generator output is consumed per value, so stream positions stay
    aligned with block or trial indices.
    """
    u = np.asarray(rng.random(size), dtype=np.float64)
    return np.where(u == 0.0, _UNIFORM_FLOOR, u)


def block_rng(seed: int) -> np.random.Generator:
    """Counter-based generator whose k-th output belongs to block k."""
    if seed < 0:
        raise DomainError(f"Seed must be nonnegative: seed={seed}")
    return np.random.Generator(np.random.Philox(key=seed))


def sample_block_sequence(model: EnergyModel, n: int, L: int, seed: int) -> np.ndarray:
    """Sample ``n`` block-i.i.d. energies with coherence time ``L``.

    Args:
        model: Energy arrival model
        n: Number of channel uses
        L: Coherence time
        seed: Key of the counter-based stream

    Returns:
        Array of length n, constant within each block
    """
    structure = BlockStructure(n, L)
    leading = model.sample(open_uniforms(block_rng(seed), structure.num_blocks))
    return np.repeat(leading, L)[:n]
