"""Equilibrium trading under price impact and per-share exchange fees."""

from .equilibrium import EquilibriumKernel, EquilibriumSolution, initial_price, last_trading_time, solve
from .exchange import (
    FeeOptimum,
    ProfitCurve,
    TargetPrior,
    expected_profit_mc,
    expected_profit_quadrature_example,
    optimal_fee,
    profit,
    profit_curve,
    twap_profit_closed_form,
)
from .model import MarketSpec, TargetPair, constant, deviations, linear, step, twap, twap_example_spec, validate
from .oracle import OptimalityReport, verify_optimality
from .simulate import PathBundle, simulate

__all__ = [
    "EquilibriumKernel",
    "EquilibriumSolution",
    "FeeOptimum",
    "MarketSpec",
    "OptimalityReport",
    "PathBundle",
    "ProfitCurve",
    "TargetPair",
    "TargetPrior",
    "constant",
    "deviations",
    "expected_profit_mc",
    "expected_profit_quadrature_example",
    "initial_price",
    "last_trading_time",
    "linear",
    "optimal_fee",
    "profit",
    "profit_curve",
    "simulate",
    "solve",
    "step",
    "twap",
    "twap_example_spec",
    "twap_profit_closed_form",
    "validate",
    "verify_optimality",
]
