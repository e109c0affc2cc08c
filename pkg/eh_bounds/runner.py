"""Grid dispatch, the self-test suite and result writing for the CLI."""

import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable, Dict, List, Optional, TextIO

import numpy as np

from .config import RunConfig
from .converse import converse_log_M, sandwich_report, sigma_conv
from .energy import Deterministic, EnergyModel, Exponential, Uniform
from .errors import ConsistencyError, DomainError
from .gaussian import kappa1, normal_cdf, normal_inv_cdf
from .linear import adaptive_delta, adaptive_message_size, quantize_index, rate_quantile
from .logs import get_logger
from .montecarlo import TAG_QUANTIZER, MonteCarloEngine, chunk_rng
from .save_transmit import (
    Regime,
    achievable_log_M,
    design,
    outage_bound,
    saving_length,
    split_epsilon,
)

logger = get_logger(__name__)

Row = Dict[str, Any]

QUANTIZER_SAMPLES = 100_000

COLUMNS: Dict[str, List[str]] = {
    "bounds": [
        "n", "L", "eps", "achievable_log_M", "achievable_feasible", "kappa1",
        "converse_log_M", "converse_feasible", "kappa2",
    ],
    "second-order": [
        "eps", "regime", "L", "v_minus_minus", "v_minus", "v_plus", "gap",
        "gap_bound", "gap_checked", "gap_within_bound",
    ],
    "design": [
        "n", "L", "eps", "eps1", "eps2", "t_n", "m", "log_M", "total_length",
        "rate", "feasible",
    ],
    "linear-capacity": ["lambda", "eps", "mode", "rate"],
    "outage-sim": [
        "n", "L", "eps1", "m", "estimate", "stderr", "trials", "seed",
        "chernoff_bound", "mismatch_rate", "aggregated_rate",
    ],
    "quantile-sim": ["lambda", "eps", "estimate", "stderr", "trials", "seed", "analytic"],
    "adaptive-sim": [
        "lambda", "n", "eta", "eps", "rate", "log_M", "estimate", "stderr",
        "trials", "seed",
    ],
    "selftest": ["check", "passed", "detail"],
}


@dataclass
class RunResult:
    """Rows produced by one run, in grid order."""

    command: str
    rows: List[Row] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return COLUMNS[self.command]

    @property
    def failed_checks(self) -> List[str]:
        if self.command != "selftest":
            return []
        return [row["check"] for row in self.rows if not row["passed"]]


def quantile_mode(model: EnergyModel) -> str:
    """Threshold rate for continuous models, lower rate otherwise."""
    return "threshold" if model.is_continuous else "lower"


class Runner:
    """Evaluates one RunConfig over its cartesian parameter grid."""

    def __init__(self, config: RunConfig, workers: int = 1):
        """Initialize the runner.

        Args:
            config: Validated run configuration
            workers: Worker threads for the Monte Carlo commands
        """
        self.config = config
        self.model = config.energy_model()
        self.engine = MonteCarloEngine(workers)
        self._handlers: Dict[str, Callable[[], Awaitable[List[Row]]]] = {
            "bounds": self._bounds,
            "second-order": self._second_order,
            "design": self._design,
            "linear-capacity": self._linear_capacity,
            "outage-sim": self._outage_sim,
            "quantile-sim": self._quantile_sim,
            "adaptive-sim": self._adaptive_sim,
            "selftest": self._selftest,
        }

    async def run(self) -> RunResult:
        command = self.config.command
        logger.info(f"Running {command} for {self.model}", extra={"command": command})
        rows = await self._handlers[command]()
        return RunResult(command, rows)

    async def _bounds(self) -> List[Row]:
        cfg, model = self.config, self.model
        rows = []
        for n, L, eps in itertools.product(cfg.n, cfg.L, cfg.eps):
            achievable = achievable_log_M(model.mean, n, eps)
            converse = converse_log_M(model, n, L, eps)
            for name, report in (("achievable", achievable), ("converse", converse)):
                if not report.feasible:
                    logger.warning(
                        f"{name} bound preconditions fail at n={n}: {', '.join(report.violated())}",
                        extra={"n": n, "L": L, "eps": eps},
                    )
            rows.append(
                {
                    "n": n,
                    "L": L,
                    "eps": eps,
                    "achievable_log_M": achievable.value,
                    "achievable_feasible": achievable.feasible,
                    "kappa1": kappa1(model.mean, eps),
                    "converse_log_M": converse.value,
                    "converse_feasible": converse.feasible,
                    "kappa2": converse.residual,
                }
            )
        return rows

    async def _second_order(self) -> List[Row]:
        rows = []
        for regime, eps in itertools.product(self.config.regimes(), self.config.eps):
            rows.append(sandwich_report(self.model, regime, eps).to_dict())
        return rows

    async def _design(self) -> List[Row]:
        cfg = self.config
        rows = []
        for n, L, eps, eps1 in itertools.product(cfg.n, cfg.L, cfg.eps, cfg.eps1):
            code = design(self.model, L, n, eps, eps1)
            rows.append(
                {
                    "n": n,
                    "L": L,
                    "eps": eps,
                    "eps1": eps1,
                    "eps2": code.eps2,
                    "t_n": code.t_n,
                    "m": code.m,
                    "log_M": code.log_M,
                    "total_length": code.total_length,
                    "rate": code.rate,
                    "feasible": code.feasible,
                }
            )
        return rows

    async def _linear_capacity(self) -> List[Row]:
        cfg = self.config
        rows = []
        for lam, eps, mode in itertools.product(cfg.lam, cfg.eps, cfg.mode):
            rows.append({"lambda": lam, "eps": eps, "mode": mode, "rate": rate_quantile(self.model, lam, eps, mode)})
        return rows

    async def _outage_sim(self) -> List[Row]:
        cfg, model = self.config, self.model
        rows = []
        for n, L, eps1 in itertools.product(cfg.n, cfg.L, cfg.eps1):
            plan = saving_length(model, L, n, eps1)
            saving_lengths: List[Optional[int]] = list(cfg.m) if cfg.m else [plan.m]
            for m in saving_lengths:
                row: Row = {"n": n, "L": L, "eps1": eps1, "m": m, "trials": cfg.trials, "seed": cfg.seed}
                if m is None:
                    rows.append(row)
                    continue
                try:
                    row["chernoff_bound"] = outage_bound(model, L, plan.t_n, m, n).reported
                except DomainError as e:
                    logger.debug(f"No Chernoff bound at n={n}, L={L}: {e}")
                sim = await self.engine.simulate_outage(model, model.mean, n, L, m, cfg.trials, cfg.seed)
                row.update(sim.to_dict())
                rows.append(row)
        return rows

    async def _quantile_sim(self) -> List[Row]:
        cfg, model = self.config, self.model
        rows = []
        for lam, eps in itertools.product(cfg.lam, cfg.eps):
            sim = await self.engine.empirical_rate_quantile(model, lam, eps, cfg.trials, cfg.seed)
            row: Row = {"lambda": lam, "eps": eps}
            row.update(sim.to_dict())
            row["analytic"] = rate_quantile(model, lam, eps, quantile_mode(model))
            rows.append(row)
        return rows

    async def _adaptive_sim(self) -> List[Row]:
        cfg, model = self.config, self.model
        rows = []
        for lam, n, eta, eps in itertools.product(cfg.lam, cfg.n, cfg.eta, cfg.eps):
            rate = rate_quantile(model, lam, eps, quantile_mode(model))
            sim = await self.engine.simulate_adaptive_budget(model, lam, n, eta, rate, cfg.trials, cfg.seed)
            row: Row = {"lambda": lam, "n": n, "eta": eta, "eps": eps, "rate": rate}
            row.update(sim.to_dict())
            row["log_M"] = adaptive_message_size(n, rate, eta)
            rows.append(row)
        return rows

    async def _selftest(self) -> List[Row]:
        checks: List[Callable[[], Awaitable[str]]] = [
            self._check_normal_inverse,
            self._check_epsilon_split,
            self._check_quantizer,
            self._check_sandwich,
            self._check_closed_form_rate,
            self._check_outage_events,
            self._check_info_density,
            self._check_converse_variance,
            self._check_energy_estimation,
        ]
        rows = []
        for check in checks:
            name = check.__name__.removeprefix("_check_")
            try:
                detail = await check()
                passed = True
            except ConsistencyError as e:
                detail, passed = str(e), False
                logger.error(f"Self-test {name} failed: {e}")
            rows.append({"check": name, "passed": passed, "detail": detail})
        return rows

    async def _check_normal_inverse(self) -> str:
        grid = [1e-12, 1e-6, 0.01, 0.1, 0.5, 0.9, 0.99, 1 - 1e-6]
        worst = max(abs(normal_cdf(normal_inv_cdf(p)) - p) / min(p, 1 - p) for p in grid)
        if worst > 1e-9:
            raise ConsistencyError(f"Normal inverse round trip off by {worst:.3g} (relative)")
        return f"{len(grid)} points, worst relative error {worst:.3g}"

    async def _check_epsilon_split(self) -> str:
        pairs = [(0.1, 0.05), (0.3, 0.1), (0.7, 0.2), (0.5, 1e-9), (0.99, 0.33)]
        for eps, eps1 in pairs:
            if eps1 + split_epsilon(eps, eps1) != eps:
                raise ConsistencyError(f"Split of eps={eps} with eps1={eps1} is not exact")
        return f"{len(pairs)} splits exact"

    async def _check_quantizer(self) -> str:
        delta = adaptive_delta(1.0, 4096)
        values = 50.0 * chunk_rng(self.config.seed, TAG_QUANTIZER, 0).random(QUANTIZER_SAMPLES)
        grid = 2.0 * delta * quantize_index(values, delta)
        bad = np.flatnonzero(~((grid <= values) & (values < grid + 2.0 * delta)))
        if bad.size:
            a, g = values[bad[0]], grid[bad[0]]
            raise ConsistencyError(f"Quantizer sandwich fails at a={a!r}: g={g!r}, delta={delta}")
        return f"{len(values)} energies bracketed"

    async def _check_sandwich(self) -> str:
        points = 0
        for model_cls, P, eps in itertools.product(
            (Deterministic, Exponential, Uniform), (0.5, 1.0, 2.0, 4.0), (0.01, 0.05, 0.1, 0.2, 0.4)
        ):
            model = model_cls(P)
            for regime in (Regime.growing(), Regime.constant(1), Regime.constant(4)):
                sandwich_report(model, regime, eps)
                points += 1
        return f"{points} orderings hold"

    async def _check_closed_form_rate(self) -> str:
        eps = 1.0 - math.exp(-1.0)
        rate = rate_quantile(Exponential(1.0), 1.0, eps)
        if abs(rate - 0.5) > 1e-6:
            raise ConsistencyError(f"Closed-form threshold rate {rate} differs from 0.5")
        return f"threshold rate {rate:.12g}"

    async def _check_outage_events(self) -> str:
        model, n, L, eps1 = Deterministic(1.0), 200, 4, 0.1
        plan = saving_length(model, L, n, eps1)
        if plan.m is None:
            raise ConsistencyError(f"No saving length at n={n}, L={L}")
        sim = await self.engine.simulate_outage(model, model.mean, n, L, plan.m, 10000, self.config.seed)
        if sim.estimate > eps1 + 3.0 * sim.stderr:
            raise ConsistencyError(f"Outage frequency {sim.estimate} exceeds eps1={eps1}")
        return f"10000 trajectories, outage {sim.estimate:.4g}, m={plan.m}"

    async def _check_info_density(self) -> str:
        sim = await self.engine.simulate_info_density(1.0, 100, 10000, self.config.seed)
        if abs(sim.estimate - 0.5) > 4.0 * sim.stderr:
            raise ConsistencyError(f"Information density mean {sim.estimate} far from 0.5")
        return f"mean {sim.estimate:.5g}, sup-gap {sim.extras['be_gap']:.3g}"

    async def _check_converse_variance(self) -> str:
        model, L = Exponential(1.0), 4
        sim = await self.engine.simulate_converse_variance(model, L, 100000, self.config.seed)
        analytic = sigma_conv(model, L) ** 2
        if abs(sim.estimate / analytic - 1.0) > 0.05:
            raise ConsistencyError(f"Converse variance {sim.estimate} differs from {analytic}")
        return f"variance {sim.estimate:.5g} vs {analytic:.5g}"

    async def _check_energy_estimation(self) -> str:
        L = 4096
        sim = await self.engine.simulate_energy_estimation(Deterministic(1.0), L, 10000, self.config.seed)
        floor = sim.extras["floor"]
        if sim.estimate < floor - 3.0 * sim.stderr:
            raise ConsistencyError(f"Estimation success {sim.estimate} below {floor}")
        return f"success {sim.estimate:.4g} vs floor {floor:.4g}"


def format_value(value: Any) -> str:
    """CSV cell: 17 significant digits for floats, lowercase booleans, blank for None."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_result(result: RunResult, config: RunConfig, stream: TextIO) -> None:
    """Write rows in the configured format, headed by the resolved config."""
    if config.format == "json":
        document = {
            "config": config.record(),
            "rows": [{k: _json_value(row.get(k)) for k in result.columns} for row in result.rows],
        }
        stream.write(json.dumps(document, sort_keys=True, indent=2))
        stream.write("\n")
        return
    stream.write(f"# config={config.record_json()}\n")
    stream.write(",".join(result.columns) + "\n")
    for row in result.rows:
        stream.write(",".join(format_value(row.get(k)) for k in result.columns) + "\n")


def emit(result: RunResult, config: RunConfig) -> None:
    """Write to ``config.out`` or stdout.

    Raises:
        OSError: If the output file cannot be written
    """
    if config.out is None:
        write_result(result, config, sys.stdout)
        return
    with open(config.out, "w", encoding="utf-8", newline="") as f:
        write_result(result, config, f)
    logger.info(f"Wrote {len(result.rows)} rows to {config.out}", extra={"path": str(config.out)})
