"""Seeded equilibrium path simulation: price, dividend, holdings, wealth, money market.

Brownian increments come from ``numpy.random.default_rng(seed)`` (PCG64)
via ``standard_normal``. Each increment of the dividend martingale over a
grid cell is drawn with the exact cell variance ``int sigma(u)^2 du``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .equilibrium import EquilibriumSolution, spec_integrand, solve
from .model import Deviations, MarketSpec
from .numerics import Real1DFunction, integrate

DEFAULT_STEPS = 1024


@dataclass
class PathBundle:
    times: np.ndarray
    brownian_increments: np.ndarray
    S_hat: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    mm1: np.ndarray
    mm2: np.ndarray
    dividend: float
    lam: float
    n: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "S_hat", "theta1", "theta2", "X1", "X2", "mm1", "mm2"])
        cols = (self.times, self.S_hat, self.theta1, self.theta2, self.X1, self.X2, self.mm1, self.mm2)
        for row in zip(*cols):
            w.writerow([format(float(x), ".17g") for x in row])
        return buf.getvalue()


def _cell_integrals(f: Real1DFunction, grid: np.ndarray) -> np.ndarray:
    return np.array([integrate(f, a, b) for a, b in zip(grid[:-1], grid[1:])])


def _running_variation(theta: np.ndarray, start: float) -> np.ndarray:
    jumps = np.abs(np.diff(theta, prepend=start))
    return np.cumsum(jumps)


def simulate(
    spec: MarketSpec,
    dev: Deviations,
    lam: float,
    n_steps: int = DEFAULT_STEPS,
    seed: int = 0,
    solution: EquilibriumSolution = None,
) -> PathBundle:
    """Simulate one equilibrium path on a uniform grid of ``n_steps`` cells."""
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    sol = solution if solution is not None else solve(spec, dev, lam)
    grid = np.linspace(0.0, spec.T, n_steps + 1)

    sig = spec.sigma
    sig2 = Real1DFunction(lambda u: sig(u) ** 2, sig.breakpoints, lambda u: sig.left(u) ** 2)
    cell_sd = np.sqrt(_cell_integrals(sig2, grid))
    z = np.random.default_rng(seed).standard_normal(n_steps)
    dM = cell_sd * z
    M = np.concatenate([[0.0], np.cumsum(dM)])

    # deterministic part integrated exactly per cell, accumulated from T backwards
    imbalance = dev.a_sigma - spec.n
    c1n = spec.c1 * spec.n
    drift_f = spec_integrand(spec, lambda u, k, g: k * (g * imbalance - c1n))
    cells = 0.5 * _cell_integrals(drift_f, grid)
    offset = np.concatenate([np.cumsum(cells[::-1])[::-1], [0.0]])

    S = spec.dividend_mean + M + offset
    D = float(S[-1])

    th1 = np.array([sol.theta(1, t) for t in grid])
    th2 = np.array([sol.theta(2, t) for t in grid])
    half = 0.5 * spec.n
    dS = np.diff(S)
    X = []
    for th in (th1, th2):
        gains = np.concatenate([[0.0], np.cumsum(th[:-1] * dS)])
        X.append(half * S[0] + gains - lam * _running_variation(th, half))
    mm1 = X[0] - th1 * S
    mm2 = X[1] - th2 * S
    return PathBundle(grid, dM, S, th1, th2, X[0], X[1], mm1, mm2, D, lam, spec.n)


def turnover_path(bundle: PathBundle) -> Tuple[np.ndarray, np.ndarray]:
    """Running total variation of each agent's holdings, time-0 block included."""
    half = 0.5 * bundle.n
    return _running_variation(bundle.theta1, half), _running_variation(bundle.theta2, half)
