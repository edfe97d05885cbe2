"""Localized infinite-horizon LQR synthesis via column-wise closed-loop maps."""

from .column import LocalizedCLM, synthesize_all, verify_achievability
from .errors import LocSLSError
from .evaluation import fir_cost, fir_synthesize, h2_cost_lyapunov, simulate_closed_loop
from .netmodel import CostWeights, Pattern, Plant, SubsystemPartition, chain_benchmark, chain_patterns
from .realization import DistributedController

__all__ = [
    "CostWeights",
    "DistributedController",
    "LocSLSError",
    "LocalizedCLM",
    "Pattern",
    "Plant",
    "SubsystemPartition",
    "chain_benchmark",
    "chain_patterns",
    "fir_cost",
    "fir_synthesize",
    "h2_cost_lyapunov",
    "simulate_closed_loop",
    "synthesize_all",
    "verify_achievability",
]
