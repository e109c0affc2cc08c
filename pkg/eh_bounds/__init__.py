"""Finite-blocklength bounds for AWGN energy-harvesting channels.

Analytic achievability and converse bounds for block energy arrivals, the
linear coherence-time regime, and Monte Carlo oracles that check them.
"""

__version__ = "0.1.0"

from .converse import converse_log_M, sandwich_report
from .energy import EnergyModel, model_from_spec
from .montecarlo import MonteCarloEngine
from .save_transmit import achievable_log_M, design, saving_length


def main() -> None:
    """Main entry point for the package."""
    from .__main__ import app

    app()


__all__ = [
    "EnergyModel",
    "MonteCarloEngine",
    "achievable_log_M",
    "converse_log_M",
    "design",
    "main",
    "model_from_spec",
    "sandwich_report",
    "saving_length",
]
