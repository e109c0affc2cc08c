"""Converse side: upper bounds on log M and the second-order sandwich."""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

from .energy import EnergyModel, varrho
from .errors import ConsistencyError, DomainError
from .gaussian import LOG2E, capacity, converse_variance_term, kappa2, normal_cdf, normal_inv_cdf, tau2
from .logs import get_logger
from .reports import BoundReport, Condition
from .save_transmit import Regime, second_order_lower

logger = get_logger(__name__)

# Largest eps for which the explicit gap bound is claimed.
GAP_EPS_LIMIT = normal_cdf(-1.0)


@dataclass(frozen=True)
class ConverseStats:
    """Per-block statistics of the converse information density.

    Attributes:
        sigma_conv: Standard deviation of one block's contribution, in bits
        tau2: Berry-Esseen ratio bound
        kappa2: Residual constant of the converse bound, in bits
    """

    sigma_conv: float
    tau2: float
    kappa2: float

    def to_dict(self) -> Dict[str, float]:
        return {"sigma_conv": self.sigma_conv, "tau2": self.tau2, "kappa2": self.kappa2}


def sigma_conv(model: EnergyModel, L: int) -> float:
    P = model.mean
    return L * LOG2E / (2.0 * (1.0 + P)) * math.sqrt(converse_variance_term(model, L))


def converse_stats(model: EnergyModel, L: int, eps: float) -> ConverseStats:
    return ConverseStats(
        sigma_conv=sigma_conv(model, L),
        tau2=tau2(model, L),
        kappa2=kappa2(model, L, eps),
    )


def converse_log_M(model: EnergyModel, n: int, L: int, eps: float) -> BoundReport:
    """Upper bound on log M for any code of length ``n``.

    Args:
        model: Energy arrival model
        n: Blocklength
        L: Coherence time
        eps: Error probability

    Returns:
        BoundReport whose only condition is the blocklength requirement
    """
    if n < 1:
        raise DomainError(f"Blocklength must be >= 1: n={n}")
    P = model.mean
    stats = converse_stats(model, L, eps)
    padded = n + L
    first = padded * capacity(P)
    spread = math.sqrt(2.0 * P * (P + 2.0) + L * (model.m2 - P * P))
    second = math.sqrt(padded) * LOG2E / (2.0 * (1.0 + P)) * spread * normal_inv_cdf(eps)
    log_term = 0.5 * math.log2(padded)
    threshold = 4.0 * L * stats.tau2**2 / (1.0 - eps) ** 4
    return BoundReport(
        value=first + second + log_term + stats.kappa2,
        first_order=first,
        second_order=second,
        log_term=log_term,
        residual=stats.kappa2,
        conditions=[Condition("converse_blocklength", n >= threshold, float(n), threshold)],
    )


def second_order_upper(model: EnergyModel, eps: float) -> float:
    """Upper bound on the second-order coding rate, in bits."""
    P = model.mean
    return LOG2E / (2.0 * (1.0 + P)) * math.sqrt(2.0 * P * P + model.m2) * normal_inv_cdf(eps)


def gap_bound(model: EnergyModel, regime: Regime, eps: float) -> float:
    """Claimed bound on ``v_plus - v_minus`` for small ``eps``."""
    if not (0.0 < eps < 1.0):
        raise DomainError(f"Probability outside (0, 1): eps={eps}")
    P = model.mean
    C = capacity(P)
    upper_root = math.sqrt((2.0 * P * P + model.m2) * LOG2E / (2.0 * (1.0 + P) ** 2))
    if regime.is_constant:
        coefficient = C * math.sqrt(2.0 * varrho(model)) + math.sqrt(4.0 * P * LOG2E / (1.0 + P)) - upper_root
    else:
        coefficient = C * math.sqrt(varrho(model)) - upper_root
    return coefficient * math.sqrt(-math.log2(eps))


@dataclass(frozen=True)
class SandwichReport:
    """Second-order bounds at one ``eps`` with the checks applied to them.

    ``gap_within_bound`` is None when the gap check does not apply.
    """

    eps: float
    regime: Regime
    v_minus_minus: Optional[float]
    v_minus: float
    v_plus: float
    gap_bound: Optional[float]
    gap_within_bound: Optional[bool]

    @property
    def gap(self) -> float:
        return self.v_plus - self.v_minus

    @property
    def gap_checked(self) -> bool:
        return self.gap_within_bound is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eps": self.eps,
            "regime": self.regime.kind,
            "L": self.regime.L,
            "v_minus_minus": self.v_minus_minus,
            "v_minus": self.v_minus,
            "v_plus": self.v_plus,
            "gap": self.gap,
            "gap_bound": self.gap_bound,
            "gap_checked": self.gap_checked,
            "gap_within_bound": self.gap_within_bound,
        }


def sandwich_report(model: EnergyModel, regime: Regime, eps: float) -> SandwichReport:
    """Evaluate ``v_minus_minus <= v_minus <= v_plus`` and the gap bound.

    Raises:
        ConsistencyError: If the ordering fails for eps in (0, 1/2)
    """
    lower = second_order_lower(model, regime, eps)
    v_plus = second_order_upper(model, eps)
    if eps < 0.5 and not (lower.v_minus <= v_plus):
        raise ConsistencyError(
            f"Second-order bounds out of order for {model}, {regime}, eps={eps}: "
            f"v_minus={lower.v_minus} > v_plus={v_plus}"
        )

    bound: Optional[float] = None
    within: Optional[bool] = None
    if eps < GAP_EPS_LIMIT:
        bound = gap_bound(model, regime, eps)
        within = v_plus - lower.v_minus <= bound
        if not within:
            logger.info(
                f"Gap {v_plus - lower.v_minus:.6g} exceeds explicit bound {bound:.6g}",
                extra={"model": str(model), "regime": str(regime), "eps": eps},
            )
    return SandwichReport(
        eps=eps,
        regime=regime,
        v_minus_minus=lower.v_minus_minus,
        v_minus=lower.v_minus,
        v_plus=v_plus,
        gap_bound=bound,
        gap_within_bound=within,
    )


def epsilon_capacity_sublinear(P: float) -> float:
    """Capacity for constant or sublinear coherence time; independent of eps."""
    if not P > 0:
        raise DomainError(f"SNR must be > 0: P={P}")
    return capacity(P)


def _converse_excess(model: EnergyModel, L: int, eps: float, n: int) -> float:
    report = converse_log_M(model, n, L, eps)
    return report.value - report.first_order


def converse_crossover_length(model: EnergyModel, L: int, eps: float) -> int:
    """Smallest ``n`` from which the converse bound stays below ``(n + L) C(P)``.

    Raises:
        DomainError: If eps >= 1/2, where no crossover exists
    """
    if not (0.0 < eps < 0.5):
        raise DomainError(f"Crossover needs eps in (0, 1/2): eps={eps}")
    P = model.mean
    slope = abs(LOG2E / (2.0 * (1.0 + P)) * math.sqrt(2.0 * P * (P + 2.0) + L * (model.m2 - P * P)) * normal_inv_cdf(eps))
    # The excess decreases once sqrt(n + L) exceeds 1 / (slope ln 2).
    start = max(1, math.ceil(1.0 / (slope * math.log(2.0)) ** 2 - L))
    if _converse_excess(model, L, eps, start) < 0:
        return 1

    lo, hi = start, 2 * start
    while _converse_excess(model, L, eps, hi) >= 0:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _converse_excess(model, L, eps, mid) < 0:
            hi = mid
        else:
            lo = mid
    return hi
