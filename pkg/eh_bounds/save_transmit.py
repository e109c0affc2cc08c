"""Achievability side: energy-outage Chernoff bounds and save-and-transmit design.

A save-and-transmit code stays silent for ``m`` channel uses to bank energy and
then sends a Gaussian codeword of length ``n``. The outage probability of the
saving phase is controlled by a Chernoff bound with tilt ``t``; the message size
follows from a Berry-Esseen normal approximation of the information density.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .energy import EnergyModel, varrho
from .errors import ConsistencyError, DivergentMomentError, DomainError, InfeasibleTiltError
from .gaussian import LOG2E, capacity, info_density_stats, kappa1, normal_inv_cdf
from .logs import get_logger
from .reports import BoundReport, Condition

logger = get_logger(__name__)

# Exponents above this overflow a double.
_MAX_EXPONENT = 700.0

_SEARCH_POINTS = 128
_SEARCH_FLOOR = 1e-6


def _exp_or_inf(exponent: float) -> float:
    return math.inf if exponent > _MAX_EXPONENT else math.exp(exponent)


def _log2_inverse(eps: float, name: str) -> float:
    if not (0.0 < eps < 1.0):
        raise DomainError(f"Probability outside (0, 1): {name}={eps}")
    return -math.log2(eps)


@dataclass(frozen=True)
class ChernoffParams:
    """Chernoff exponent coefficients at a fixed tilt ``t``.

    ``a_t`` and ``b_t`` are the per-symbol coefficients; ``alpha_t``,
    ``beta_0`` and ``beta_t`` are their block-aggregated counterparts.
    """

    t: float
    L: int
    a_t: float
    b_t: float
    alpha_t: float
    beta_0: float
    beta_t: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "L": self.L,
            "a_t": self.a_t,
            "b_t": self.b_t,
            "alpha_t": self.alpha_t,
            "beta_0": self.beta_0,
            "beta_t": self.beta_t,
        }


@dataclass(frozen=True)
class OutageBound:
    """Raw value of a Chernoff outage bound; ``reported`` is clamped to 1."""

    raw: float

    @property
    def reported(self) -> float:
        return min(1.0, self.raw)


def chernoff_outage_bound(a_t: float, b_t: float, t: float, m: int, n: int) -> OutageBound:
    """Bound ``exp(-a_t t m + b_t t^2 n)`` on the energy-outage probability.

    Args:
        a_t: Linear exponent coefficient
        b_t: Quadratic exponent coefficient
        t: Tilt
        m: Saving-phase length
        n: Transmission length

    Returns:
        OutageBound holding the raw (possibly vacuous) value

    Raises:
        InfeasibleTiltError: If a_t <= 0
        DomainError: If t <= 0 or a length is negative
    """
    if a_t <= 0:
        raise InfeasibleTiltError(f"Chernoff coefficient must be positive: a_t={a_t}")
    if t <= 0:
        raise DomainError(f"Tilt must be positive: t={t}")
    if m < 0 or n < 0:
        raise DomainError(f"Lengths must be nonnegative: m={m}, n={n}")
    return OutageBound(_exp_or_inf(-a_t * t * m + b_t * t * t * n))


def _gaussian_fourth_tilted(P: float, t: float) -> float:
    """E[X^4 exp(t X^2)] for X ~ N(0, P)."""
    return 3.0 * P * P / (1.0 - 2.0 * P * t) ** 2.5


def symbol_chernoff_params(model: EnergyModel, t: float) -> ChernoffParams:
    """Per-symbol coefficients for Gaussian input with power ``P``.

    Raises:
        DivergentMomentError: If t >= 1 / (2P)
    """
    return block_chernoff_params(model, 1, t)


def block_chernoff_params(model: EnergyModel, L: int, t: float) -> ChernoffParams:
    """Block-aggregated Chernoff coefficients for coherence time ``L``.

    Args:
        model: Energy arrival model
        L: Coherence time
        t: Tilt, with 0 < t < 1 / (2 L P)

    Returns:
        ChernoffParams at tilt t

    Raises:
        DivergentMomentError: If t is outside the admissible range
    """
    if L < 1:
        raise DomainError(f"Coherence time must be >= 1: L={L}")
    P, m2 = model.mean, model.m2
    limit = 1.0 / (2.0 * L * P)
    if not (0.0 < t < limit):
        raise DivergentMomentError(f"Tilt outside (0, 1/(2LP)) = (0, {limit:.6g}): t={t}")

    mu4 = _gaussian_fourth_tilted(P, t)
    a_t = P - t * m2 / 2.0
    b_t = max(
        0.0,
        (m2 + mu4) / 2.0 - P * P + t * P / 2.0 * (m2 - mu4) + t * t * m2 * mu4 / 2.0,
    )

    w = (1.0 - 2.0 * L * P * t) ** -2.5
    alpha_t = L * (P - t * L * m2 / 2.0)
    beta_0 = L * L * (m2 + P * P) / 2.0
    beta_t = L * L * max(
        0.0,
        m2 / 2.0
        + 1.5 * P * P * w
        - P * P
        + t * L * P / 2.0 * (m2 - 3.0 * P * P * w)
        + 1.5 * t * t * L * L * P * P * m2 * w,
    )
    return ChernoffParams(t=t, L=L, a_t=a_t, b_t=b_t, alpha_t=alpha_t, beta_0=beta_0, beta_t=beta_t)


def block_outage_bound(params: ChernoffParams, m: int, n: int) -> OutageBound:
    """Chernoff bound after aggregating symbols into whole energy blocks.

    Only complete saving blocks count (``floor(m/L)``) and the transmission
    phase is padded to ``ceil(n/L)`` blocks.
    """
    if params.alpha_t <= 0:
        raise InfeasibleTiltError(f"Block coefficient must be positive: alpha_t={params.alpha_t}")
    L = params.L
    saved_blocks = m // L
    sent_blocks = -(-n // L)
    t = params.t
    return OutageBound(
        _exp_or_inf(-params.alpha_t * t * (saved_blocks - 1) + params.beta_t * t * t * sent_blocks)
    )


def outage_bound(model: EnergyModel, L: int, t: float, m: int, n: int) -> OutageBound:
    """Per-symbol bound for ``L = 1`` and the block bound otherwise."""
    params = block_chernoff_params(model, L, t)
    if L == 1:
        return chernoff_outage_bound(params.a_t, params.b_t, t, m, n)
    return block_outage_bound(params, m, n)


def _blocklength_conditions(model: EnergyModel, L: int, n: int, eps1: float) -> List[Condition]:
    P, m2 = model.mean, model.m2
    log_inv = _log2_inverse(eps1, "eps1")
    beta_0 = L * L * (m2 + P * P) / 2.0
    spread = max(4.0 * P * P, m2 * m2 / (4.0 * P * P))

    outage_rhs = 2.0 * L * log_inv / (m2 + P * P) * spread
    block_rhs = L**3 * log_inv / beta_0 * spread
    moment_rhs = L * m2 * m2 * log_inv / P**4
    return [
        Condition("block_outage_blocklength", n > block_rhs, float(n), block_rhs),
        Condition("outage_blocklength", n > outage_rhs, float(n), outage_rhs),
        Condition("second_moment_blocklength", n >= moment_rhs, float(n), moment_rhs),
    ]


@dataclass(frozen=True)
class SavingLength:
    """Tilt and saving-phase length guaranteeing outage at most ``eps1``.

    ``m`` is None when ``t_n`` falls outside the admissible tilt range, where
    the block coefficients are undefined.
    """

    n: int
    L: int
    eps1: float
    t_n: float
    m: Optional[int]
    m_upper: Optional[float]
    params: Optional[ChernoffParams]
    conditions: List[Condition] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.conditions[0].holds and self.m is not None

    def violated(self) -> List[str]:
        return [c.name for c in self.conditions if not c.holds]


def saving_length_upper_bound(model: EnergyModel, L: int, n: int, eps1: float) -> Optional[float]:
    """Explicit upper bound on the saving length, or None where it is undefined."""
    P, m2 = model.mean, model.m2
    log_inv = _log2_inverse(eps1, "eps1")
    theta = math.sqrt(L * log_inv / n)
    denominator = P - m2 / (2.0 * P) * theta
    if 1.0 - 2.0 * theta <= 0 or denominator <= 0:
        return None
    numerator = (
        m2 + 1.5 * P * P / (1.0 - 2.0 * theta) ** 2.5 - P * P / 2.0 + m2 / 2.0 * theta
    ) * math.sqrt((L * n + L * L) * log_inv)
    return numerator / (denominator * math.sqrt((m2 + P * P) / 2.0)) + 2 * L + 1


def saving_length(model: EnergyModel, L: int, n: int, eps1: float) -> SavingLength:
    """Saving-phase length for a target energy-outage probability.

    Args:
        model: Energy arrival model
        L: Coherence time
        n: Transmission length
        eps1: Target outage probability

    Returns:
        SavingLength with the tilt, the length and the blocklength conditions
    """
    if n < 1 or L < 1:
        raise DomainError(f"Need n >= 1 and L >= 1: n={n}, L={L}")
    log_inv = _log2_inverse(eps1, "eps1")
    P = model.mean
    beta_0 = L * L * (model.m2 + P * P) / 2.0
    blocks = -(-n // L)
    t_n = math.sqrt(log_inv / (blocks * beta_0))
    conditions = _blocklength_conditions(model, L, n, eps1)

    m: Optional[int] = None
    params: Optional[ChernoffParams] = None
    try:
        params = block_chernoff_params(model, L, t_n)
    except DivergentMomentError:
        logger.debug(f"Tilt t_n={t_n:.6g} outside admissible range", extra={"n": n, "L": L})
    if params is not None and params.alpha_t > 0:
        m = math.ceil(
            math.sqrt((n / L + 1.0) * log_inv) * L * (params.beta_t + beta_0) / (params.alpha_t * math.sqrt(beta_0))
            + 2 * L
        )

    result = SavingLength(
        n=n,
        L=L,
        eps1=eps1,
        t_n=t_n,
        m=m,
        m_upper=saving_length_upper_bound(model, L, n, eps1),
        params=params,
        conditions=conditions,
    )
    if not result.feasible:
        logger.warning(
            f"Saving length infeasible for n={n}, L={L}: {', '.join(result.violated()) or 'tilt range'}",
            extra={"n": n, "L": L, "eps1": eps1},
        )
    return result


def limiting_saving_ratio(model: EnergyModel, eps1: float) -> float:
    """Limit of ``m / sqrt(L n)`` as n grows."""
    return math.sqrt(varrho(model) * _log2_inverse(eps1, "eps1"))


def achievable_log_M(P: float, n: int, eps2: float) -> BoundReport:
    """Lower bound on log M for the transmission phase of length ``n``.

    Args:
        P: Signal-to-noise ratio
        n: Transmission length
        eps2: Decoding error budget

    Returns:
        BoundReport; infeasibility of the normal approximation is a condition
    """
    if n < 1:
        raise DomainError(f"Blocklength must be >= 1: n={n}")
    stats = info_density_stats(P)
    first = n * stats.mu
    second = math.sqrt(n * P * LOG2E**2 / (1.0 + P)) * normal_inv_cdf(eps2)
    log_term = -0.5 * math.log2(n)
    residual = -kappa1(P, eps2)
    margin = eps2 - eps2 * eps2 - (stats.tau1 + 1.0) / math.sqrt(n)
    return BoundReport(
        value=first + second + log_term + residual,
        first_order=first,
        second_order=second,
        log_term=log_term,
        residual=residual,
        conditions=[Condition("normal_approximation", margin >= 0, margin, 0.0)],
    )


def split_epsilon(eps: float, eps1: float) -> float:
    """Return ``eps2`` with ``eps1 + eps2 == eps`` in floating point."""
    if not (0.0 < eps1 < eps < 1.0):
        raise DomainError(f"Need 0 < eps1 < eps < 1: eps={eps}, eps1={eps1}")
    eps2 = eps - eps1
    while eps1 + eps2 < eps:
        eps2 = float(np.nextafter(eps2, 1.0))
    while eps1 + eps2 > eps:
        eps2 = float(np.nextafter(eps2, 0.0))
    return eps2


@dataclass(frozen=True)
class SaveTransmitDesign:
    """A complete save-and-transmit code of total length ``n + m``."""

    n: int
    L: int
    eps: float
    eps1: float
    eps2: float
    t_n: float
    m: Optional[int]
    log_M: float
    saving: SavingLength
    message: BoundReport

    @property
    def conditions(self) -> List[Condition]:
        return list(self.saving.conditions) + list(self.message.conditions)

    @property
    def feasible(self) -> bool:
        return self.saving.feasible and all(c.holds for c in self.conditions)

    @property
    def total_length(self) -> Optional[int]:
        return None if self.m is None else self.n + self.m

    @property
    def rate(self) -> Optional[float]:
        total = self.total_length
        return None if total is None else self.log_M / total


def design(model: EnergyModel, L: int, n: int, eps: float, eps1: float) -> SaveTransmitDesign:
    """Split ``eps`` into outage and decoding budgets and size the code."""
    eps2 = split_epsilon(eps, eps1)
    saving = saving_length(model, L, n, eps1)
    message = achievable_log_M(model.mean, n, eps2)
    return SaveTransmitDesign(
        n=n,
        L=L,
        eps=eps,
        eps1=eps1,
        eps2=eps2,
        t_n=saving.t_n,
        m=saving.m,
        log_M=message.value,
        saving=saving,
        message=message,
    )


@dataclass(frozen=True)
class Regime:
    """How the coherence time scales with the blocklength.

    ``growing`` means ``L`` grows without bound but sublinearly in ``n``;
    ``constant`` fixes ``L``.
    """

    kind: str
    L: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("growing", "constant"):
            raise DomainError(f"Unknown regime: {self.kind!r}")
        if self.kind == "constant" and (self.L is None or self.L < 1):
            raise DomainError(f"Constant regime needs L >= 1: L={self.L}")

    @classmethod
    def growing(cls) -> "Regime":
        return cls("growing")

    @classmethod
    def constant(cls, L: int) -> "Regime":
        return cls("constant", L)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def __str__(self) -> str:
        return self.kind if not self.is_constant else f"constant(L={self.L})"


def _outage_penalty(model: EnergyModel, eps1: float) -> float:
    return -capacity(model.mean) * math.sqrt(varrho(model) * _log2_inverse(eps1, "eps1"))


def _constant_objective(model: EnergyModel, L: int, eps: float, eps1: float) -> float:
    P = model.mean
    weight = math.sqrt(P * LOG2E**2 / (L * (1.0 + P)))
    return _outage_penalty(model, eps1) + weight * normal_inv_cdf(eps - eps1)


def _maximize_split(model: EnergyModel, L: int, eps: float) -> float:
    """Sup over ``eps1 + eps2 = eps`` by grid search then bounded refinement."""
    offsets = eps * np.geomspace(_SEARCH_FLOOR, 0.5, _SEARCH_POINTS)
    grid = np.unique(np.concatenate([offsets, eps - offsets, [eps / 2.0]]))
    grid = grid[(grid > 0) & (grid < eps)]
    values = np.array([_constant_objective(model, L, eps, float(e1)) for e1 in grid])
    best = int(np.argmax(values))
    best_value = float(values[best])

    lo = float(grid[max(best - 1, 0)])
    hi = float(grid[min(best + 1, len(grid) - 1)])
    if hi > lo:
        refined = minimize_scalar(
            lambda e1: -_constant_objective(model, L, eps, e1),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * eps},
        )
        if refined.success and -refined.fun > best_value:
            logger.debug(f"Refined split eps1={refined.x:.6g}", extra={"L": L, "eps": eps})
            best_value = float(-refined.fun)
    return best_value


def v_minus(model: EnergyModel, regime: Regime, eps: float) -> float:
    """Lower bound on the second-order coding rate, in bits."""
    _log2_inverse(eps, "eps")
    if not regime.is_constant:
        return _outage_penalty(model, eps)
    assert regime.L is not None
    return _maximize_split(model, regime.L, eps)


def v_minus_minus(model: EnergyModel, regime: Regime, eps: float) -> float:
    """Simplified lower bound on the second-order coding rate.

    Raises:
        DomainError: If eps is not in (0, 1/2)
    """
    if not (0.0 < eps < 0.5):
        raise DomainError(f"Simplified lower bound needs eps in (0, 1/2): eps={eps}")
    if not regime.is_constant:
        return _outage_penalty(model, eps)
    P = model.mean
    coefficient = capacity(P) * math.sqrt(2.0 * varrho(model)) + math.sqrt(4.0 * P * LOG2E / (1.0 + P))
    return -coefficient * math.sqrt(-math.log2(eps))


@dataclass(frozen=True)
class SecondOrderLower:
    v_minus: float
    v_minus_minus: Optional[float]


def second_order_lower(model: EnergyModel, regime: Regime, eps: float) -> SecondOrderLower:
    """Both second-order lower bounds; ``v_minus_minus`` is None for eps >= 1/2.

    Raises:
        ConsistencyError: If the simplified bound exceeds the exact one
    """
    lower = v_minus(model, regime, eps)
    simple = v_minus_minus(model, regime, eps) if eps < 0.5 else None
    if simple is not None and simple > lower:
        raise ConsistencyError(
            f"Simplified lower bound exceeds lower bound for {model}, {regime}, eps={eps}: "
            f"{simple} > {lower}"
        )
    return SecondOrderLower(v_minus=lower, v_minus_minus=simple)
