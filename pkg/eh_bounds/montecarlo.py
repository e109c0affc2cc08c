"""Monte Carlo oracles for the analytic bounds.

Trials are split into fixed-size chunks. Chunk ``c`` of a run draws from its
own Philox stream keyed by ``(seed, stream tag, c)``, chunks run on worker
threads, and partial results are merged in chunk order. The outcome of a run
is therefore the same for any number of workers.
"""

import math
import sys
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import anyio
import anyio.to_thread
import numpy as np
from scipy.special import ndtr, ndtri

from .converse import sigma_conv
from .energy import EnergyModel, open_uniforms
from .errors import ConsistencyError, DomainError
from .gaussian import LOG2E, capacity_of, info_density_stats
from .linear import (
    adaptive_delta,
    adaptive_message_size,
    bits_at_rate,
    block_structure,
    estimate_index,
    quantize_index,
    rate_coefficients,
    sample_rate,
)
from .logs import get_logger

if sys.version_info < (3, 11):
    from exceptiongroup import BaseExceptionGroup

logger = get_logger(__name__)

CHUNK_SIZE = 1024
BOOTSTRAP_RESAMPLES = 100
BE_GRID = np.linspace(-4.0, 4.0, 101)

# Stream tags keep the operations' random streams disjoint.
TAG_OUTAGE = 1
TAG_INFO_DENSITY = 2
TAG_ESTIMATION = 3
TAG_RATE = 4
TAG_BOOTSTRAP = 5
TAG_ADAPTIVE = 6
TAG_CONVERSE = 7
TAG_QUANTIZER = 8

T = TypeVar("T")


@dataclass(frozen=True)
class SimEstimate:
    """Monte Carlo point estimate with its standard error.

    Attributes:
        estimate: Probability or rate estimate
        stderr: Standard error of the estimate
        trials: Number of trials
        seed: Seed of the run
        extras: Further statistics recorded by the oracle
    """

    estimate: float
    stderr: float
    trials: int
    seed: int
    extras: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_count(cls, hits: int, trials: int, seed: int, **extras: float) -> "SimEstimate":
        p = hits / trials
        return cls(p, math.sqrt(p * (1.0 - p) / trials), trials, seed, dict(extras))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "trials": self.trials,
            "seed": self.seed,
        }
        data.update(self.extras)
        return data


def _leaf_errors(group: BaseExceptionGroup) -> List[BaseException]:
    leaves: List[BaseException] = []
    for error in group.exceptions:
        if isinstance(error, BaseExceptionGroup):
            leaves.extend(_leaf_errors(error))
        else:
            leaves.append(error)
    return leaves


def _first_error(group: BaseExceptionGroup) -> BaseException:
    """The error a chunk failure should surface as.

    Chunk failures come back wrapped by the task group. A ConsistencyError
    wins over other errors; the group is kept only if it holds something
    other than ordinary exceptions.
    """
    leaves = _leaf_errors(group)
    for error in leaves:
        if isinstance(error, ConsistencyError):
            return error
    if leaves and all(isinstance(error, Exception) for error in leaves):
        return leaves[0]
    return group


def chunk_rng(seed: int, tag: int, chunk: int) -> np.random.Generator:
    """Counter-based stream for one chunk of one operation."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, tag, chunk])))


def gaussians(rng: np.random.Generator, size: Any, variance: float = 1.0) -> np.ndarray:
    """Zero-mean Gaussians by inversion of open-interval uniforms."""
    return math.sqrt(variance) * ndtri(open_uniforms(rng, size))


def _chunk_sizes(trials: int) -> List[int]:
    full, rest = divmod(trials, CHUNK_SIZE)
    return [CHUNK_SIZE] * full + ([rest] if rest else [])


@dataclass
class _Moments:
    """Count, mean and centered second moment, merged pairwise."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        mean = float(values.mean())
        return cls(values.size, mean, float(((values - mean) ** 2).sum()))

    def merge(self, other: "_Moments") -> "_Moments":
        if self.count == 0:
            return other
        total = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / total
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        return _Moments(total, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0


# Chunk kernels. Each takes its generator and chunk size first.


@dataclass
class _OutageChunk:
    outages: int
    mismatches: int
    aggregated: int


def _outage_kernel(
    rng: np.random.Generator, size: int, model: EnergyModel, P: float, n: int, L: int, m: int
) -> _OutageChunk:
    total = m + n
    blocks = -(-total // L)
    block_energy = model.sample(open_uniforms(rng, (size, blocks)))
    energy = np.repeat(block_energy, L, axis=1)[:, :total]
    sent_blocks = -(-n // L)
    x2_padded = gaussians(rng, (size, sent_blocks * L), P) ** 2
    x2 = x2_padded[:, :n]

    cum_energy = np.cumsum(energy, axis=1)
    cum_x2 = np.cumsum(x2, axis=1)
    union = np.any(cum_x2 >= cum_energy[:, m:], axis=1)

    # Running energy balance, frozen from the first exhausted transmission slot.
    balance = cum_energy[:, m - 1].copy() if m > 0 else np.zeros(size)
    for k in range(n):
        active = balance > 0 if k > 0 else np.ones(size, dtype=bool)
        balance = np.where(active, balance + energy[:, m + k] - x2[:, k], balance)
    if np.any((balance <= 0) != union):
        bad = int(np.sum((balance <= 0) != union))
        raise ConsistencyError(f"Energy balance disagrees with outage event on {bad} trajectories")

    # Clipping encoder: a symbol is sent only if the stored energy covers it.
    spent = np.zeros(size)
    mismatch = np.zeros(size, dtype=bool)
    for k in range(n):
        fits = x2[:, k] <= cum_energy[:, m + k] - spent
        spent = spent + np.where(fits, x2[:, k], 0.0)
        mismatch |= ~fits
    if np.any(mismatch & ~union):
        raise ConsistencyError("Encoder clipped a codeword outside the outage event")

    # Whole-block aggregation: block energies L * E and padded block powers.
    cum_block_x2 = np.cumsum(x2_padded.reshape(size, sent_blocks, L).sum(axis=2), axis=1)
    cum_block_energy = np.concatenate(
        [np.zeros((size, 1)), np.cumsum(L * block_energy, axis=1)], axis=1
    )
    first = m // L
    aggregated = np.any(cum_block_x2 >= cum_block_energy[:, first : first + sent_blocks], axis=1)
    if np.any(union & ~aggregated):
        raise ConsistencyError("Block-aggregated outage event misses a per-symbol outage")

    return _OutageChunk(int(union.sum()), int(mismatch.sum()), int(aggregated.sum()))


@dataclass
class _InfoDensityChunk:
    moments: _Moments
    third_abs: float
    below: np.ndarray


def _info_density_kernel(rng: np.random.Generator, size: int, P: float, n: int) -> _InfoDensityChunk:
    stats = info_density_stats(P)
    x = gaussians(rng, (size, n), P)
    z = gaussians(rng, (size, n))
    summand = stats.mu + (-P * z * z + 2.0 * x * z + x * x) * LOG2E / (2.0 * (1.0 + P))
    standardized = (summand.sum(axis=1) - n * stats.mu) / (stats.sigma * math.sqrt(n))
    below = (standardized[:, None] <= BE_GRID[None, :]).sum(axis=0)
    return _InfoDensityChunk(
        moments=_Moments.of(summand.ravel()),
        third_abs=float((np.abs(summand - stats.mu) ** 3).sum()),
        below=below,
    )


@dataclass
class _EstimationChunk:
    successes: int
    close: int


def _estimation_kernel(rng: np.random.Generator, size: int, model: EnergyModel, L: int) -> _EstimationChunk:
    delta = adaptive_delta(model.mean, L)
    pilots = math.ceil(math.sqrt(L))
    energy = model.sample(open_uniforms(rng, size))
    level = quantize_index(energy, delta)
    grid_energy = 2.0 * delta * level
    received = np.sqrt(grid_energy)[:, None] + gaussians(rng, (size, pilots))
    mean_sq = (received * received).mean(axis=1)
    success = estimate_index(mean_sq, delta) == level
    close = np.abs(mean_sq - grid_energy - 1.0) < delta
    return _EstimationChunk(int(success.sum()), int(close.sum()))


def _rate_kernel(rng: np.random.Generator, size: int, model: EnergyModel, lam: float) -> np.ndarray:
    q, _, _ = rate_coefficients(lam)
    return sample_rate(model, lam, open_uniforms(rng, (size, q + 1)))


def _adaptive_kernel(
    rng: np.random.Generator,
    size: int,
    model: EnergyModel,
    lengths: Sequence[int],
    delta: float,
    log_M: int,
) -> int:
    energy = model.sample(open_uniforms(rng, (size, len(lengths))))
    rates = capacity_of(2.0 * delta * quantize_index(energy, delta))
    bits = np.zeros(size, dtype=np.int64)
    for j, ell in enumerate(lengths):
        bits += bits_at_rate(ell, rates[:, j])
    return int(np.sum(bits < log_M))


def _converse_kernel(rng: np.random.Generator, size: int, model: EnergyModel, L: int) -> _Moments:
    P = model.mean
    energy = model.sample(open_uniforms(rng, size))
    z = gaussians(rng, (size, L))
    statistic = (
        LOG2E
        / (2.0 * (1.0 + P))
        * (-P * (z * z).sum(axis=1) + 2.0 * np.sqrt(energy) * z.sum(axis=1) + L * energy)
    )
    return _Moments.of(statistic)


def _bootstrap_stderr(samples: np.ndarray, eps: float, seed: int) -> float:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, TAG_BOOTSTRAP])))
    estimates = np.empty(BOOTSTRAP_RESAMPLES)
    for b in range(BOOTSTRAP_RESAMPLES):
        resample = samples[rng.integers(0, samples.size, samples.size)]
        estimates[b] = np.quantile(resample, eps, method="inverted_cdf")
    return float(estimates.std(ddof=1))


class MonteCarloEngine:
    """Runs the oracles on a pool of worker threads."""

    def __init__(self, workers: int = 1):
        """Initialize the engine.

        Args:
            workers: Maximum number of chunks evaluated concurrently
        """
        if workers < 1:
            raise DomainError(f"Worker count must be >= 1: workers={workers}")
        self.workers = workers

    async def _run_chunks(
        self, trials: int, seed: int, tag: int, kernel: Callable[..., T], **params: Any
    ) -> List[T]:
        if trials < 1:
            raise DomainError(f"Trial count must be >= 1: trials={trials}")
        if seed < 0:
            raise DomainError(f"Seed must be nonnegative: seed={seed}")
        sizes = _chunk_sizes(trials)
        results: List[Optional[T]] = [None] * len(sizes)
        limiter = anyio.CapacityLimiter(self.workers)

        async def run_one(index: int, size: int) -> None:
            rng = chunk_rng(seed, tag, index)
            results[index] = await anyio.to_thread.run_sync(
                partial(kernel, rng, size, **params), limiter=limiter
            )

        logger.info(
            f"Running {trials} trials in {len(sizes)} chunks on {self.workers} workers",
            extra={"tag": tag, "seed": seed},
        )
        try:
            async with anyio.create_task_group() as tg:
                for index, size in enumerate(sizes):
                    tg.start_soon(run_one, index, size)
        except BaseExceptionGroup as group:
            raise _first_error(group) from None
        return [r for r in results if r is not None]

    async def simulate_outage(
        self, model: EnergyModel, P: float, n: int, L: int, m: int, trials: int, seed: int
    ) -> SimEstimate:
        """Frequency of the energy-outage event after saving for ``m`` uses.

        Every trajectory is also checked against the running energy balance,
        the clipping encoder and the whole-block aggregation.

        Raises:
            ConsistencyError: If any of those event relations fails
        """
        if n < 1 or L < 1 or m < 0:
            raise DomainError(f"Need n >= 1, L >= 1, m >= 0: n={n}, L={L}, m={m}")
        chunks = await self._run_chunks(
            trials, seed, TAG_OUTAGE, _outage_kernel, model=model, P=P, n=n, L=L, m=m
        )
        outages = sum(c.outages for c in chunks)
        return SimEstimate.from_count(
            outages,
            trials,
            seed,
            mismatch_rate=sum(c.mismatches for c in chunks) / trials,
            aggregated_rate=sum(c.aggregated for c in chunks) / trials,
        )

    async def simulate_info_density(self, P: float, n: int, trials: int, seed: int) -> SimEstimate:
        """Moments of the information density and its normal-approximation gap.

        ``estimate`` is the per-symbol mean; extras hold the variance, the
        third absolute central moment and the sup-gap to the normal cdf.

        Raises:
            ConsistencyError: If the gap exceeds ``tau1 / sqrt(n)``
        """
        if n < 1:
            raise DomainError(f"Blocklength must be >= 1: n={n}")
        chunks = await self._run_chunks(trials, seed, TAG_INFO_DENSITY, _info_density_kernel, P=P, n=n)
        moments = _Moments()
        third_abs = 0.0
        below = np.zeros(BE_GRID.size, dtype=np.int64)
        for chunk in chunks:
            moments = moments.merge(chunk.moments)
            third_abs += chunk.third_abs
            below += chunk.below
        gap = float(np.max(np.abs(below / trials - ndtr(BE_GRID))))
        stats = info_density_stats(P)
        be_bound = stats.tau1 / math.sqrt(n)
        if gap > be_bound:
            raise ConsistencyError(f"Normal-approximation gap {gap} exceeds {be_bound}")
        return SimEstimate(
            estimate=moments.mean,
            stderr=math.sqrt(moments.variance / moments.count),
            trials=trials,
            seed=seed,
            extras={
                "variance": moments.variance,
                "third_abs_moment": third_abs / moments.count,
                "be_gap": gap,
                "be_bound": be_bound,
            },
        )

    async def simulate_energy_estimation(
        self, model: EnergyModel, L: int, trials: int, seed: int
    ) -> SimEstimate:
        """Success frequency of the pilot-based energy-level estimator."""
        if L < 2:
            raise DomainError(f"Block length must be >= 2: L={L}")
        chunks = await self._run_chunks(trials, seed, TAG_ESTIMATION, _estimation_kernel, model=model, L=L)
        return SimEstimate.from_count(
            sum(c.successes for c in chunks),
            trials,
            seed,
            close_rate=sum(c.close for c in chunks) / trials,
            floor=1.0 - L ** (-1.0 / 6.0),
        )

    async def empirical_rate_quantile(
        self, model: EnergyModel, lam: float, eps: float, trials: int, seed: int
    ) -> SimEstimate:
        """Empirical ``eps``-quantile of the linear-regime rate, with bootstrap error."""
        if not (0.0 < eps < 1.0):
            raise DomainError(f"Probability outside (0, 1): eps={eps}")
        chunks = await self._run_chunks(trials, seed, TAG_RATE, _rate_kernel, model=model, lam=lam)
        samples = np.concatenate(chunks)
        estimate = float(np.quantile(samples, eps, method="inverted_cdf"))
        stderr = await anyio.to_thread.run_sync(partial(_bootstrap_stderr, samples, eps, seed))
        return SimEstimate(estimate, stderr, trials, seed)

    async def simulate_adaptive_budget(
        self, model: EnergyModel, lam: float, n: int, eta: float, rate: float, trials: int, seed: int
    ) -> SimEstimate:
        """Frequency with which the adaptive blocks carry fewer bits than the message."""
        structure = block_structure(lam, n)
        delta = adaptive_delta(model.mean, structure.L)
        log_M = adaptive_message_size(n, rate, eta)
        hits = await self._run_chunks(
            trials,
            seed,
            TAG_ADAPTIVE,
            _adaptive_kernel,
            model=model,
            lengths=structure.block_lengths(),
            delta=delta,
            log_M=log_M,
        )
        return SimEstimate.from_count(sum(hits), trials, seed, log_M=float(log_M), delta=delta)

    async def simulate_converse_variance(
        self, model: EnergyModel, L: int, trials: int, seed: int
    ) -> SimEstimate:
        """Sample variance of one block's converse statistic."""
        chunks = await self._run_chunks(trials, seed, TAG_CONVERSE, _converse_kernel, model=model, L=L)
        moments = _Moments()
        for chunk in chunks:
            moments = moments.merge(chunk)
        variance = moments.variance
        return SimEstimate(
            estimate=variance,
            stderr=variance * math.sqrt(2.0 / max(moments.count - 1, 1)),
            trials=trials,
            seed=seed,
            extras={"mean": moments.mean, "analytic": sigma_conv(model, L) ** 2},
        )
