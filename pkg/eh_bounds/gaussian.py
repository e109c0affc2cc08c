"""Gaussian special functions and information-density statistics.

Every rate in this package is measured in bits, so the ``log e`` factors that
appear in the bounds are ``LOG2E = log2(e)``.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import ndtr, ndtri

from .errors import DomainError
from .logs import get_logger

if TYPE_CHECKING:
    from .energy import EnergyModel

logger = get_logger(__name__)

LOG2E = math.log2(math.e)
_CUBE_ROOT_15 = 15.0 ** (1.0 / 3.0)


def _check_snr(P: float, strict: bool = False) -> float:
    P = float(P)
    if not math.isfinite(P) or P < 0 or (strict and P == 0):
        bound = "> 0" if strict else ">= 0"
        raise DomainError(f"SNR must be finite and {bound}: P={P}")
    return P


def _check_probability(p: float, name: str = "eps") -> float:
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"Probability outside (0, 1): {name}={p}")
    return p


def capacity(P: float) -> float:
    """AWGN capacity ``0.5 * log2(1 + P)`` in bits per channel use.

    Args:
        P: Signal-to-noise ratio, finite and nonnegative

    Returns:
        Capacity in bits per channel use

    Raises:
        DomainError: If P is negative or not finite
    """
    P = _check_snr(P)
    return 0.5 * math.log2(1.0 + P)


def capacity_of(energies: ArrayLike) -> np.ndarray:
    """Vectorized ``capacity`` over an array of nonnegative energies."""
    values = np.asarray(energies, dtype=np.float64)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("Energies must be finite and nonnegative")
    return 0.5 * np.log2(1.0 + values)


def normal_cdf(x: float) -> float:
    """Standard normal cdf."""
    return float(ndtr(x))


def normal_inv_cdf(p: float) -> float:
    """Standard normal quantile function.

    Raises:
        DomainError: If p is not strictly inside (0, 1)
    """
    p = _check_probability(p, "p")
    return float(ndtri(p))


def normal_pdf(x: float) -> float:
    """Standard normal density."""
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def density_at_quantile(p: float) -> float:
    """Normal density evaluated at the standard normal p-quantile."""
    return normal_pdf(normal_inv_cdf(p))


@dataclass(frozen=True)
class InfoDensityStats:
    """Per-symbol statistics of the Gaussian-input information density."""

    mu: float
    sigma: float
    tau1: float

    @property
    def variance(self) -> float:
        return self.sigma * self.sigma

    def to_dict(self) -> Dict[str, float]:
        return {"mu": self.mu, "sigma": self.sigma, "tau1": self.tau1}


def tau1(P: float) -> float:
    """Closed-form upper bound on the Berry-Esseen ratio T / sigma^3."""
    P = _check_snr(P, strict=True)
    numerator = (_CUBE_ROOT_15 * math.sqrt(P) + 8.0 / math.sqrt(math.pi)) ** 3
    return numerator / (1.0 + P) ** 1.5


def berry_esseen_third_moment_bound(P: float) -> float:
    """Bound on the cube root of the third absolute central moment.

    Uses the ``8 sqrt(P) / pi`` form of the cross term. It is reported next to
    ``tau1`` for comparison and is not used by any bound.
    """
    P = _check_snr(P, strict=True)
    return LOG2E / (1.0 + P) * (_CUBE_ROOT_15 * P + 8.0 * math.sqrt(P) / math.pi)


def info_density_stats(P: float) -> InfoDensityStats:
    """Mean, standard deviation and ratio bound of the information density.

    Args:
        P: Signal-to-noise ratio, strictly positive

    Returns:
        InfoDensityStats with ``mu = C(P)``

    Raises:
        DomainError: If P is not strictly positive
    """
    P = _check_snr(P, strict=True)
    sigma = math.sqrt(P * LOG2E**2 / (1.0 + P))
    return InfoDensityStats(mu=capacity(P), sigma=sigma, tau1=tau1(P))


def kappa1(P: float, eps2: float) -> float:
    """Residual constant of the achievable message size, in bits."""
    P = _check_snr(P, strict=True)
    eps2 = _check_probability(eps2, "eps2")
    density = density_at_quantile(min(eps2 * eps2, 1.0 - eps2))
    numerator = math.sqrt(P / (1.0 + P)) * (tau1(P) + 1.0) * LOG2E
    return numerator / density + 1.0


def converse_variance_term(model: "EnergyModel", L: int) -> float:
    """``2P(P+2)/L + E[E^2] - P^2``, the normalized per-block variance."""
    if L < 1:
        raise DomainError(f"Coherence time must be >= 1: L={L}")
    P = model.mean
    return 2.0 * P * (P + 2.0) / L + model.m2 - P * P


def tau2(model: "EnergyModel", L: int) -> float:
    """Berry-Esseen ratio bound for the per-block converse statistic.

    Args:
        model: Energy arrival model with finite third moment
        L: Coherence time

    Returns:
        The dimensionless ratio bound

    Raises:
        DomainError: If the variance term vanishes
    """
    P = model.mean
    variance = converse_variance_term(model, L)
    if variance <= 0:
        raise DomainError(f"Converse variance term vanishes: P={P}, L={L}")
    numerator = (
        _CUBE_ROOT_15 * P
        + 2.0 * (2.0 * math.sqrt(2.0 / math.pi)) ** (1.0 / 3.0) * model.m3half ** (1.0 / 3.0)
        + model.m3 ** (1.0 / 3.0)
    ) ** 3
    return numerator / variance**1.5


def kappa2(model: "EnergyModel", L: int, eps: float) -> float:
    """Residual constant of the converse bound, in bits."""
    eps = _check_probability(eps)
    P = model.mean
    t2 = tau2(model, L)
    spread = math.sqrt(2.0 * L * P * (P + 2.0) + L * L * (model.m2 - P * P))
    density = density_at_quantile(min(eps, eps * (1.0 - eps)))
    return t2 / (1.0 + P) * spread * LOG2E / density - math.log2(t2 * math.sqrt(L))
