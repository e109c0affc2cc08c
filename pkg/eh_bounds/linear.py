"""Coherence time growing linearly in the blocklength, ``L = floor(lambda n)``.

Two things live here. The first is the rate whose ``eps``-quantile is the
eps-capacity in this regime, ``S = sum_{l<=q} lambda C(E_l) + d C(E_{q+1})``.
The second is the bookkeeping of the adaptive save-and-transmit scheme: the
energy quantizer, the per-block bit budget and the pilot-based estimator.
"""

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.signal import fftconvolve

from .energy import EnergyModel
from .errors import DomainError, UnsupportedModeError
from .gaussian import capacity, capacity_of
from .logs import get_logger
from .reports import Condition

logger = get_logger(__name__)

RATE_MODES = ("lower", "upper", "threshold")
RATE_METHODS = ("auto", "closed-form", "convolution")

LATTICE_POINTS = 2**14
# Upper tail probability ignored when sizing the lattice of an unbounded model.
LATTICE_TAIL = 1e-12
QUANTILE_TOLERANCE = 1e-9


def exact_fraction(lam: float) -> Fraction:
    """Interpret ``lam`` as the decimal it was written as."""
    lam_exact = Fraction(repr(float(lam)))
    if not (0 < lam_exact <= 1):
        raise DomainError(f"Fraction of blocklength outside (0, 1]: lambda={lam}")
    return lam_exact


def _ceil_pow_two_thirds(ell: int) -> int:
    """``ceil(ell ** (2/3))`` in integer arithmetic."""
    target = ell * ell
    c = max(0, round(ell ** (2.0 / 3.0)))
    while c**3 < target:
        c += 1
    while c > 0 and (c - 1) ** 3 >= target:
        c -= 1
    return c


def _pow_three_quarters(ell: int) -> float:
    root = math.isqrt(math.isqrt(ell))
    if root**4 == ell:
        return float(root**3)
    return ell**0.75


@dataclass(frozen=True)
class LinearBlockStructure:
    """Block layout for ``L = floor(lambda n)``.

    Attributes:
        lam: Fraction of the blocklength per block, in (0, 1]
        n: Blocklength
        L: Block length
        q: ``floor(1 / lambda)``
        d: ``1 - q lambda``
        rho: Number of full blocks, ``floor(n / L)``
    """

    lam: float
    n: int
    L: int
    q: int
    d: float
    rho: int

    @property
    def last_length(self) -> int:
        """Length of the trailing partial block, ``n - rho L``."""
        return self.n - self.rho * self.L

    @property
    def last_block_floor(self) -> int:
        """``floor(d n)``, the length used for the trailing adaptive code."""
        return math.floor(_exact_d(self.lam) * self.n)

    @property
    def rho_matches_q(self) -> bool:
        return self.rho == self.q

    @property
    def last_length_in_range(self) -> bool:
        nd = _exact_d(self.lam) * self.n
        return nd <= self.last_length <= nd + self.q

    def block_lengths(self) -> List[int]:
        """Lengths used by the adaptive scheme: ``rho`` full blocks and ``floor(d n)``."""
        return [self.L] * self.rho + [self.last_block_floor]

    def to_dict(self) -> Dict[str, float]:
        return {
            "lambda": self.lam,
            "n": self.n,
            "L": self.L,
            "q": self.q,
            "d": self.d,
            "rho": self.rho,
            "last_length": self.last_length,
            "rho_matches_q": self.rho_matches_q,
            "last_length_in_range": self.last_length_in_range,
        }


def _exact_q(lam: float) -> int:
    return math.floor(1 / exact_fraction(lam))


def _exact_d(lam: float) -> Fraction:
    lam_exact = exact_fraction(lam)
    return 1 - math.floor(1 / lam_exact) * lam_exact


def block_structure(lam: float, n: int) -> LinearBlockStructure:
    """Block layout for blocklength ``n``.

    Raises:
        DomainError: If lambda is outside (0, 1] or ``lambda n < 1``
    """
    lam_exact = exact_fraction(lam)
    if n < 1:
        raise DomainError(f"Blocklength must be >= 1: n={n}")
    L = math.floor(lam_exact * n)
    if L < 1:
        raise DomainError(f"Block length floor(lambda n) is zero: lambda={lam}, n={n}")
    q = math.floor(1 / lam_exact)
    structure = LinearBlockStructure(
        lam=float(lam), n=n, L=L, q=q, d=float(1 - q * lam_exact), rho=n // L
    )
    if not (structure.rho_matches_q and structure.last_length_in_range):
        logger.debug(f"Block layout not yet asymptotic at n={n}", extra=structure.to_dict())
    return structure


def adaptive_delta(P: float, L: int) -> float:
    """Quantizer step ``sqrt(4P + 2) / L^(1/6)``."""
    if P <= 0 or L < 1:
        raise DomainError(f"Need P > 0 and L >= 1: P={P}, L={L}")
    return math.sqrt(4.0 * P + 2.0) / L ** (1.0 / 6.0)


def quantize_index(a: ArrayLike, delta: float) -> np.ndarray:
    """Index ``v`` of the grid point ``2 v delta <= a < 2 (v + 1) delta``."""
    if delta <= 0:
        raise DomainError(f"Quantizer step must be positive: delta={delta}")
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0):
        raise DomainError("Cannot quantize a negative energy")
    step = 2.0 * delta
    v = np.floor(a / step)
    v = np.where(step * (v + 1.0) <= a, v + 1.0, v)
    v = np.where(step * v > a, v - 1.0, v)
    return v.astype(np.int64)


def quantize(a: float, delta: float) -> float:
    """Largest grid point ``2 v delta`` not exceeding ``a``."""
    return 2.0 * delta * float(quantize_index(a, delta))


def estimate_index(mean_sq: ArrayLike, delta: float) -> np.ndarray:
    """Grid index nearest to ``mean_sq - 1``, lower neighbour on ties."""
    target = np.asarray(mean_sq, dtype=np.float64) - 1.0
    positive = np.maximum(target, 0.0)
    lo = quantize_index(positive, delta)
    step = 2.0 * delta
    take_hi = (step * (lo + 1) - positive) < (positive - step * lo)
    return np.where(target <= 0, 0, lo + take_hi.astype(np.int64))


def estimate_energy_level(mean_sq: float, delta: float) -> float:
    """Estimate of the quantized energy from the pilot's mean-square.

    Args:
        mean_sq: Average received power over the pilot symbols
        delta: Quantizer step

    Returns:
        The smallest grid point minimizing ``|mean_sq - v - 1|``
    """
    if mean_sq < 0:
        raise DomainError(f"Mean-square must be nonnegative: mean_sq={mean_sq}")
    return 2.0 * delta * float(estimate_index(mean_sq, delta))


@dataclass(frozen=True)
class Quantizer:
    """Energy quantizer on the grid ``{2 v delta : v >= 0}``."""

    delta: float

    @classmethod
    def for_block(cls, P: float, L: int) -> "Quantizer":
        return cls(adaptive_delta(P, L))

    def point(self, v: int) -> float:
        return 2.0 * v * self.delta

    def __call__(self, a: float) -> float:
        return quantize(a, self.delta)

    def index(self, a: ArrayLike) -> np.ndarray:
        return quantize_index(a, self.delta)

    def estimate(self, mean_sq: float) -> float:
        return estimate_energy_level(mean_sq, self.delta)


def bits_at_rate(ell: int, rate: ArrayLike) -> np.ndarray:
    """Bits of a length-``ell`` adaptive code at capacity ``rate``, clamped at zero.

    Vectorized over ``rate``; a zero-length block sends nothing.
    """
    if ell < 0:
        raise DomainError(f"Block length must be nonnegative: ell={ell}")
    rate = np.asarray(rate, dtype=np.float64)
    if ell == 0:
        return np.zeros(rate.shape, dtype=np.int64)
    raw = (ell - _ceil_pow_two_thirds(ell)) * rate - 2.0 * _pow_three_quarters(ell)
    return np.maximum(0.0, np.floor(raw)).astype(np.int64)


def adaptive_bits(ell: int, e: float, delta: float) -> int:
    """Bits sent by an adaptive code of length ``ell`` at harvested energy ``e``.

    Clamped at zero; a zero-length block sends nothing.
    """
    return int(bits_at_rate(ell, capacity(quantize(e, delta))))


def adaptive_code_error_bound(L: int) -> float:
    """Error guarantee ``L^(-1/6) + L^(-1/2)`` of one adaptive block."""
    return L ** (-1.0 / 6.0) + L**-0.5


def energy_estimation_failure_bound(P: float, L: int) -> float:
    """Chebyshev bound on the pilot estimator missing the grid cell.

    Equals ``L^(1/3) / ceil(sqrt(L))``, which never exceeds ``L^(-1/6)``.
    """
    delta = adaptive_delta(P, L)
    return (4.0 * P + 2.0) / (delta**2 * math.ceil(math.sqrt(L)))


def adaptive_message_size(n: int, rate: float, eta: float) -> int:
    """Message size ``floor(n R - 2 n eta)``, clamped at zero."""
    if eta < 0:
        raise DomainError(f"Slack must be nonnegative: eta={eta}")
    return max(0, math.floor(n * rate - 2.0 * n * eta))


def chi_delta(model: EnergyModel, q: int, delta: float) -> float:
    """Level ``chi`` with ``Pr{max_{l<=q+1} C(E_l) >= chi} <= delta / 3``."""
    if not (0.0 < delta < 3.0):
        raise DomainError(f"Need 0 < delta < 3: delta={delta}")
    per_block = math.exp(math.log1p(-delta / 3.0) / (q + 1))
    level = capacity(float(model.upper_quantile(per_block)))
    return float(np.nextafter(level, math.inf))


def budget_condition(n: int, q: int, L: int, P: float, chi: float, eta: float) -> Condition:
    """Whether the slack ``n eta`` covers the per-block overheads."""
    delta = adaptive_delta(P, L)
    overhead = (q + 1) * (
        L * delta + _ceil_pow_two_thirds(L) * (chi + delta) + 2.0 * _pow_three_quarters(L) + chi + 1.0
    )
    return Condition("message_budget", n * eta >= overhead, n * eta, overhead)


def block_error_condition(structure: LinearBlockStructure, delta: float) -> Condition:
    """Whether the adaptive blocks' error guarantees sum to at most ``delta / 3``."""
    lengths = [structure.L] * structure.q
    if structure.d != 0:
        lengths.append(structure.last_block_floor)
    total = sum(adaptive_code_error_bound(ell) if ell > 0 else math.inf for ell in lengths)
    return Condition("block_error", total <= delta / 3.0, total, delta / 3.0)


@dataclass(frozen=True)
class MessageBudget:
    log_M: int
    conditions: List[Condition]

    @property
    def feasible(self) -> bool:
        return all(c.holds for c in self.conditions)


def message_budget(
    structure: LinearBlockStructure, model: EnergyModel, rate: float, eta: float, delta: float
) -> MessageBudget:
    """Message size of the adaptive scheme together with its preconditions."""
    chi = chi_delta(model, structure.q, delta)
    return MessageBudget(
        log_M=adaptive_message_size(structure.n, rate, eta),
        conditions=[
            budget_condition(structure.n, structure.q, structure.L, model.mean, chi, eta),
            block_error_condition(structure, delta),
            Condition("rho_equals_q", structure.rho_matches_q, float(structure.rho), float(structure.q)),
        ],
    )


@dataclass(frozen=True)
class ConstantEnergyCode:
    bits: int
    conditions: List[Condition]


def _log_length_condition(L: int) -> Condition:
    rhs = math.log2(2 * L + math.sqrt(L)) ** 4
    return Condition("log_length", L >= rhs, float(L), rhs)


def _length_ratio_condition(L: int) -> Condition:
    lhs = L / math.log2(L)
    rhs = max(12.0 * math.sqrt(2.0), math.exp(0.4) * (2.0 * math.sqrt(L) + 1.0))
    return Condition("length_ratio", lhs >= rhs, lhs, rhs)


def _pilot_overhead_condition(L: int) -> Condition:
    lhs = (2.0 - math.sqrt(3.0)) * _pow_three_quarters(L)
    rhs = (L - _ceil_pow_two_thirds(L)) ** 0.25 + 1.0
    return Condition("pilot_overhead", lhs >= rhs, lhs, rhs)


LARGENESS_CONDITIONS: Dict[str, Callable[[int], Condition]] = {
    "log_length": _log_length_condition,
    "length_ratio": _length_ratio_condition,
    "pilot_overhead": _pilot_overhead_condition,
}


def constant_energy_log_M(L: int, P_tilde: float) -> ConstantEnergyCode:
    """Bits of a length-``L`` code when every symbol harvests ``P_tilde``."""
    if L < 2 or P_tilde <= 0:
        raise DomainError(f"Need L >= 2 and P_tilde > 0: L={L}, P_tilde={P_tilde}")
    return ConstantEnergyCode(
        bits=int(bits_at_rate(L, capacity(P_tilde))),
        conditions=[check(L) for check in LARGENESS_CONDITIONS.values()],
    )


def smallest_passing_length(condition: Callable[[int], Condition], start: int = 2) -> int:
    """Smallest ``L >= start`` from which ``condition`` holds.

    Doubles until the condition holds and bisects back, so the condition
    must hold for every length beyond its first passing point.
    """
    if condition(start).holds:
        return start
    lo, hi = start, 2 * start
    while not condition(hi).holds:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if condition(mid).holds:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class RateDistribution:
    """Distribution of ``S`` on a finite support.

    For an atomic model ``values`` are the exact support points. For a
    continuous model they are lattice points ``j h`` whose mass spreads evenly
    over ``[(j - 1/2) h, (j + 1/2) h]``.
    """

    values: np.ndarray
    probs: np.ndarray
    lattice_step: Optional[float] = None

    @property
    def is_lattice(self) -> bool:
        return self.lattice_step is not None

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def lower(self, eps: float) -> float:
        cdf = self.cdf()
        k = int(np.searchsorted(cdf, eps - QUANTILE_TOLERANCE, side="left"))
        return float(self.values[min(k, len(self.values) - 1)])

    def upper(self, eps: float) -> float:
        cdf = self.cdf()
        k = int(np.searchsorted(cdf, eps + QUANTILE_TOLERANCE, side="right"))
        return float(self.values[min(k, len(self.values) - 1)])

    def threshold(self, eps: float) -> float:
        if self.lattice_step is None:
            raise UnsupportedModeError("Threshold rate needs a continuous distribution")
        h = self.lattice_step
        edges = np.concatenate([[self.values[0] - h / 2.0], self.values + h / 2.0])
        cdf = np.concatenate([[0.0], self.cdf()])
        k = int(np.searchsorted(cdf, eps, side="left"))
        k = min(max(k, 1), len(cdf) - 1)
        lo, hi = cdf[k - 1], cdf[k]
        if hi <= lo:
            return float(edges[k])
        return float(edges[k - 1] + (eps - lo) / (hi - lo) * (edges[k] - edges[k - 1]))


def rate_coefficients(lam: float) -> Tuple[int, Fraction, Fraction]:
    """Full-block count ``q``, exact ``lambda`` and remainder weight ``d = 1 - q lambda``."""
    lam_exact = exact_fraction(lam)
    q = math.floor(1 / lam_exact)
    return q, lam_exact, 1 - q * lam_exact


def atomic_rate_distribution(model: EnergyModel, lam: float) -> RateDistribution:
    """Exact distribution of ``S`` for a finitely supported model."""
    atoms = model.atoms()
    if atoms is None:
        raise DomainError(f"Model {model} has no finite support")
    q, lam_exact, d = rate_coefficients(lam)
    rates = [capacity(value) for value, _ in atoms]

    support: Dict[float, float] = {}
    for combo in itertools.combinations_with_replacement(range(len(atoms)), q):
        counts = [combo.count(j) for j in range(len(atoms))]
        ways = math.factorial(q)
        for c in counts:
            ways //= math.factorial(c)
        head = ways * math.prod(atoms[j][1] ** c for j, c in enumerate(counts))
        for last, (_, p_last) in enumerate(atoms):
            weights = [c * lam_exact + (d if j == last else 0) for j, c in enumerate(counts)]
            value = math.fsum(float(w) * r for w, r in zip(weights, rates))
            support[value] = support.get(value, 0.0) + head * p_last

    values = np.array(sorted(support))
    probs = np.array([support[v] for v in values])
    return RateDistribution(values=values, probs=probs / probs.sum())


def _lattice_extent(model: EnergyModel) -> float:
    if model.family == "uniform":
        return capacity(2.0 * model.mean)
    return capacity(float(model.quantile(1.0 - LATTICE_TAIL)))


def _term_pmf(model: EnergyModel, weight: float, h: float, top: float) -> np.ndarray:
    """Mass of ``weight * C(E)`` rounded to the nearest multiple of ``h``."""
    size = int(math.ceil(weight * top / h)) + 2
    edges = (np.arange(size) + 0.5) * h
    cdf = model.cdf(np.expm1(2.0 * math.log(2.0) * edges / weight))
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    pmf[-1] += 1.0 - cdf[-1]
    return pmf


def lattice_rate_distribution(model: EnergyModel, lam: float, points: int = LATTICE_POINTS) -> RateDistribution:
    """Distribution of ``S`` for a continuous model, by lattice convolution."""
    if not model.is_continuous:
        raise DomainError(f"Lattice convolution needs a continuous model: {model}")
    q, lam_exact, d = rate_coefficients(lam)
    top = _lattice_extent(model)
    h = top / (points - 1)

    weights = [float(lam_exact)] * q + ([float(d)] if d else [])
    pmf = np.array([1.0])
    for weight in weights:
        pmf = fftconvolve(pmf, _term_pmf(model, weight, h, top))
        pmf = np.clip(pmf, 0.0, None)
        pmf /= pmf.sum()
    logger.debug(f"Convolved {len(weights)} terms on {len(pmf)} lattice points", extra={"h": h})
    return RateDistribution(values=np.arange(len(pmf)) * h, probs=pmf, lattice_step=h)


def _closed_form_applies(lam: float) -> bool:
    q, _, d = rate_coefficients(lam)
    return q == 1 and d == 0


def rate_quantile(
    model: EnergyModel, lam: float, eps: float, mode: str = "threshold", method: str = "auto"
) -> float:
    """Quantile rate of the linear-coherence regime, in bits per channel use.

    Args:
        model: Energy arrival model
        lam: Fraction of the blocklength per block
        eps: Error probability
        mode: ``lower``, ``upper`` or ``threshold``
        method: ``auto``, ``closed-form`` or ``convolution``

    Returns:
        The requested rate

    Raises:
        UnsupportedModeError: For threshold mode on a non-continuous model
        DomainError: For out-of-range arguments or an inapplicable method
    """
    if not (0.0 < eps < 1.0):
        raise DomainError(f"Probability outside (0, 1): eps={eps}")
    if mode not in RATE_MODES:
        raise DomainError(f"Unknown rate mode: {mode!r}")
    if method not in RATE_METHODS:
        raise DomainError(f"Unknown rate method: {method!r}")
    exact_fraction(lam)

    if not model.is_continuous:
        if mode == "threshold":
            raise UnsupportedModeError(
                f"Threshold rate needs a continuous strictly increasing cdf: {model}"
            )
        if method != "auto":
            raise DomainError(f"Method {method!r} needs a continuous model: {model}")
        distribution = atomic_rate_distribution(model, lam)
        return distribution.lower(eps) if mode == "lower" else distribution.upper(eps)

    if method == "closed-form" and not _closed_form_applies(lam):
        raise DomainError(f"Closed form needs lambda = 1: lambda={lam}")
    if mode == "threshold" and method != "convolution" and _closed_form_applies(lam):
        return capacity(float(model.quantile(eps)))
    if method == "closed-form":
        raise DomainError(f"Closed form gives the threshold rate only: mode={mode!r}")

    distribution = lattice_rate_distribution(model, lam)
    if mode == "lower":
        return distribution.lower(eps)
    if mode == "upper":
        return distribution.upper(eps)
    return distribution.threshold(eps)


def rate_grid(model: EnergyModel, lam: float, eps_values: List[float], mode: str = "threshold") -> List[float]:
    """``rate_quantile`` over several ``eps`` sharing one convolution."""
    if model.is_continuous and not (mode == "threshold" and _closed_form_applies(lam)):
        distribution = lattice_rate_distribution(model, lam)
        pick = {"lower": distribution.lower, "upper": distribution.upper}.get(mode, distribution.threshold)
        return [pick(eps) for eps in eps_values]
    return [rate_quantile(model, lam, eps, mode) for eps in eps_values]


def sample_rate(model: EnergyModel, lam: float, uniforms: np.ndarray) -> np.ndarray:
    """``S`` for each row of block-leading uniforms, shape ``(trials, q + 1)``."""
    q, lam_exact, d = rate_coefficients(lam)
    rates = capacity_of(model.sample(uniforms))
    return float(lam_exact) * rates[:, :q].sum(axis=1) + float(d) * rates[:, q]
