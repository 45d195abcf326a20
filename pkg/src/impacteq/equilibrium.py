"""Closed-form equilibrium: last trading time, holdings, impact coefficients, drifts, adjoint.

All quantities are conditional on the targets ``(a1, a2)``. Agent indices
are 1 and 2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from .errors import InternalConsistencyError, ParameterError
from .model import Deviations, MarketSpec
from .numerics import Real1DFunction, first_time_below, integrate

log = logging.getLogger(__name__)

# tau must stay this far (relative to T) below the horizon
_TAU_GUARD = 1e-9


def sgn(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def spec_integrand(spec: MarketSpec, expr: Callable[[float, float, float], float], extra=()) -> Real1DFunction:
    """Wrap ``expr(u, kappa(u), gamma(u))`` with breakpoints and left limits."""
    kap, gam = spec.kappa, spec.gamma
    bps = tuple(sorted(set(spec.breakpoints) | set(extra)))
    return Real1DFunction(
        lambda u: expr(u, kap(u), gam(u)),
        bps,
        lambda u: expr(u, kap.left(u), gam.left(u)),
    )


def kappa_integral(spec: MarketSpec, a: float, b: float) -> float:
    return integrate(spec.kappa.as_real_function(), a, b)


def kappa_gamma_integral(spec: MarketSpec, a: float, b: float) -> float:
    return integrate(spec_integrand(spec, lambda u, k, g: k * g), a, b)


def trade_scale(spec: MarketSpec, dev: Deviations) -> float:
    """|A1| (1 + 2 c1) / (1 + c1), the common factor in tau and chi."""
    return abs(dev.A1) * (1.0 + 2.0 * spec.c1) / (1.0 + spec.c1)


def impact_coefficients(spec: MarketSpec, dev: Deviations) -> Tuple[Callable[[float], float], float]:
    """Return ``(c0, c2)``; ``c0`` is a function of time."""
    c1, n = spec.c1, spec.n
    slope = (1.0 + 2.0 * c1) / (2.0 * (1.0 + c1)) * (dev.a_sigma - n)
    gamma = spec.gamma

    def c0(t: float) -> float:
        return c1 * n - slope * gamma(t)

    return c0, c1 / (1.0 + c1)


def deterrence_threshold(spec: MarketSpec, dev: Deviations) -> float:
    if dev.A1 == 0:
        return 0.0
    return trade_scale(spec, dev) * kappa_gamma_integral(spec, 0.0, spec.T)


def trading_incentive(spec: MarketSpec, dev: Deviations) -> Real1DFunction:
    """g(t) = scale * int_t^T kappa(u) (gamma(u) - gamma(t)) du, nonincreasing in t."""
    scale = trade_scale(spec, dev)
    T = spec.T

    def g(t: float) -> float:
        gt = spec.gamma(t)
        return scale * integrate(spec_integrand(spec, lambda u, k, gu: k * (gu - gt)), t, T)

    return Real1DFunction(g, spec.breakpoints)


def last_trading_time(spec: MarketSpec, dev: Deviations, lam: float) -> float:
    """First time after which the remaining trading incentive is worth at most ``lam``."""
    if not lam > 0:
        raise ParameterError([f"fee rate must be positive, got {lam}"])
    if dev.A1 == 0 or deterrence_threshold(spec, dev) <= lam:
        return 0.0
    g = trading_incentive(spec, dev)
    if g(0.0) <= lam:
        return 0.0
    tol = 1e-12 * spec.T
    tau = first_time_below(g, lam, 0.0, spec.T, tol)
    # a jump of gamma can carry g below lam; the infimum is then the jump
    # itself, which bisection only brackets to within tol
    for bp in spec.breakpoints:
        if tau - 2.0 * tol <= bp <= tau and g(bp) <= lam:
            return bp
    return tau


@dataclass(frozen=True)
class AdjointValue:
    t: float
    Y1: float
    Y2: float


@dataclass(frozen=True)
class EquilibriumSolution:
    """Equilibrium for fixed targets and fee rate.

    The post-``tau`` level of the effective trajectory and the tail
    integrals of kappa and kappa*gamma over ``[tau, T]`` are computed once,
    so holdings queries are O(1).
    """

    spec: MarketSpec
    dev: Deviations
    lam: float
    tau: float
    chi: float
    gamma_tilde_terminal: float
    c2: float
    tail_kappa: float
    tail_kappa_gamma: float
    warnings: Tuple[str, ...] = field(default=())

    @property
    def lambda_(self) -> float:
        return self.lam

    @property
    def trade_occurs(self) -> bool:
        return self.chi > self.lam

    def c0(self, t: float) -> float:
        return impact_coefficients(self.spec, self.dev)[0](t)

    def gamma_tilde(self, t: float) -> float:
        if t < self.tau:
            return self.spec.gamma(t)
        return self.gamma_tilde_terminal if self.trade_occurs else 0.0

    def gamma_tilde_left(self, t: float) -> float:
        if t <= self.tau:
            return self.spec.gamma.left(t)
        return self.gamma_tilde_terminal if self.trade_occurs else 0.0

    def theta(self, i: int, t: float) -> float:
        spec = self.spec
        half = 0.5 * spec.n
        A = self.dev.A(i)
        if t < self.tau:
            return half + A / (1.0 + spec.c1) * spec.gamma(t)
        if self.trade_occurs:
            return half + (
                self.tail_kappa_gamma * A / (1.0 + spec.c1)
                - self.lam * sgn(A) / (1.0 + 2.0 * spec.c1)
            ) / self.tail_kappa
        return half

    def holdings(self, t: float) -> Tuple[float, float]:
        return self.theta(1, t), self.theta(2, t)

    def theta_left(self, i: int, t: float) -> float:
        """theta_{i,t-}; the initial endowment n/2 at t=0."""
        if t <= 0.0:
            return 0.5 * self.spec.n
        if t <= self.tau:
            return 0.5 * self.spec.n + self.dev.A(i) / (1.0 + self.spec.c1) * self.spec.gamma.left(t)
        return self.theta(i, t)

    def terminal_deviation(self, i: int = 1) -> float:
        """theta_{i,T} - n/2 written as A_i gamma_tilde / (1 + c1)."""
        if not self.trade_occurs:
            return 0.0
        return self.dev.A(i) / (1.0 + self.spec.c1) * self.gamma_tilde_terminal

    def turnover(self, i: int = 1) -> float:
        """Total variation of theta_i on [0-, T], including the time-0 block.

        The path is monotone, so this is the sum of the initial jump, the
        continuous run along gamma up to tau-, and the jump at tau.
        """
        if not self.trade_occurs:
            return 0.0
        w = abs(self.dev.A(i)) / (1.0 + self.spec.c1)
        if self.tau <= 0.0:
            return w * abs(self.gamma_tilde_terminal)
        g = self.spec.gamma
        g0, g_pre = g(0.0), g.left(self.tau)
        return w * (abs(g0) + (g_pre - g0) + abs(self.gamma_tilde_terminal - g_pre))

    def equilibrium_drift(self, t: float) -> float:
        return equilibrium_drift(self.spec, self.dev, t)

    def perceived_drift(self, i: int, theta: float, t: float) -> float:
        return perceived_drift(self.spec, self.dev, i, theta, t)

    def adjoint(self, t: float) -> AdjointValue:
        spec = self.spec
        if self.dev.A1 == 0:
            return AdjointValue(t, 0.0, 0.0)
        kap, gam = spec.kappa, spec.gamma
        f = Real1DFunction(
            lambda u: kap(u) * (gam(u) - self.gamma_tilde(u)),
            tuple(sorted(set(spec.breakpoints) | {self.tau})),
            lambda u: kap.left(u) * (gam.left(u) - self.gamma_tilde_left(u)),
        )
        factor = (1.0 + 2.0 * spec.c1) / (1.0 + spec.c1)
        integral = integrate(f, t, spec.T)
        return AdjointValue(t, self.dev.A1 * factor * integral, self.dev.A2 * factor * integral)

    def summary(self) -> dict:
        spec = self.spec
        return {
            "lambda": self.lam,
            "tau": self.tau,
            "chi": self.chi,
            "trade_occurs": self.trade_occurs,
            "gamma_tilde_terminal": self.gamma_tilde_terminal,
            "c0_start": self.c0(0.0),
            "c0_end": self.c0(spec.T),
            "c2": self.c2,
            "theta1_T": self.theta(1, spec.T),
            "theta2_T": self.theta(2, spec.T),
            "turnover1": self.turnover(1),
            "turnover2": self.turnover(2),
            "warnings": list(self.warnings),
        }


def solve(spec: MarketSpec, dev: Deviations, lam: float) -> EquilibriumSolution:
    """Construct the equilibrium for targets ``dev`` and fee rate ``lam``."""
    if not lam > 0:
        raise ParameterError([f"fee rate must be positive, got {lam}"])
    warnings = []
    if spec.c1_warning:
        warnings.append(spec.c1_warning)
        log.warning(spec.c1_warning)

    chi = deterrence_threshold(spec, dev)
    tau = last_trading_time(spec, dev, lam)
    T = spec.T
    tail_k = tail_kg = math.nan
    level = 0.0
    if chi > lam:
        if tau > T - _TAU_GUARD * T:
            raise InternalConsistencyError(f"tau={tau} too close to T={T}")
        tail_k = kappa_integral(spec, tau, T)
        tail_kg = kappa_gamma_integral(spec, tau, T)
        if not tail_k > 0:
            raise InternalConsistencyError(f"int_tau^T kappa = {tail_k} is not positive")
        level = (tail_kg - lam / trade_scale(spec, dev)) / tail_k
    elif tau != 0.0:
        raise InternalConsistencyError(f"no-trade equilibrium with tau={tau}")

    return EquilibriumSolution(
        spec=spec,
        dev=dev,
        lam=lam,
        tau=tau,
        chi=chi,
        gamma_tilde_terminal=level,
        c2=spec.c1 / (1.0 + spec.c1),
        tail_kappa=tail_k,
        tail_kappa_gamma=tail_kg,
        warnings=tuple(warnings),
    )


def terminal_level(spec: MarketSpec, dev: Deviations, lam: float, tau: float = None) -> Real1DFunction:
    """Effective trajectory gamma-tilde as a function on [0, T]."""
    sol = solve(spec, dev, lam)
    if tau is not None and tau != sol.tau:
        raise ValueError(f"tau={tau} does not match the last trading time {sol.tau}")
    return Real1DFunction(
        sol.gamma_tilde,
        tuple(sorted(set(spec.breakpoints) | {sol.tau})),
        sol.gamma_tilde_left,
    )


def holdings(spec: MarketSpec, dev: Deviations, lam: float, t: float) -> Tuple[float, float]:
    return solve(spec, dev, lam).holdings(t)


def equilibrium_drift(spec: MarketSpec, dev: Deviations, t: float) -> float:
    """Drift of the equilibrium price at time t."""
    return spec.kappa(t) * (0.5 * spec.c1 * spec.n - 0.5 * spec.gamma(t) * (dev.a_sigma - spec.n))


def perceived_drift(spec: MarketSpec, dev: Deviations, i: int, theta: float, t: float) -> float:
    """Drift agent ``i`` perceives when holding ``theta`` shares at time ``t``."""
    c0, c2 = impact_coefficients(spec, dev)
    return spec.kappa(t) * (
        c0(t) - spec.c1 * theta + spec.gamma(t) * c2 * (dev.a(i) - 0.5 * spec.n)
    )


def adjoint(spec: MarketSpec, dev: Deviations, lam: float, t: float) -> AdjointValue:
    return solve(spec, dev, lam).adjoint(t)


def price_offset(spec: MarketSpec, dev: Deviations, t: float) -> float:
    """Deterministic part of the equilibrium price beyond the dividend martingale.

    0.5 * int_t^T kappa(u) (gamma(u) (a_sigma - n) - c1 n) du
    """
    imbalance = dev.a_sigma - spec.n
    c1n = spec.c1 * spec.n
    f = spec_integrand(spec, lambda u, k, g: k * (g * imbalance - c1n))
    return 0.5 * integrate(f, t, spec.T)


def initial_price(spec: MarketSpec, dev: Deviations) -> float:
    return spec.dividend_mean + price_offset(spec, dev, 0.0)


class EquilibriumKernel:
    """Vectorised terminal-level solver for many deviations at once.

    Cumulative integrals of kappa and kappa*gamma are tabulated at the
    breakpoints with ``integrate``; between breakpoints both integrands are
    polynomials of degree at most two, so a single Simpson panel is exact.

    The incentive h(t) = int_t^T kappa (gamma - gamma(t)) is tabulated on a
    fine grid containing every breakpoint. Inside a cell gamma is linear, so
    h is convex and decreasing there and Newton's method started at the left
    end of the bracketing cell climbs monotonically to the root. A jump of
    gamma at the right end of the cell is handled by evaluating h with the
    in-cell linear extension of gamma and clipping at the cell end.
    """

    _CELLS = 4096
    _NEWTON_STEPS = 12

    def __init__(self, spec: MarketSpec):
        self.spec = spec
        nodes = [0.0] + list(spec.breakpoints) + [spec.T]
        self.nodes = np.asarray(nodes)
        ck, ckg = [0.0], [0.0]
        kg = spec_integrand(spec, lambda u, k, g: k * g)
        kap = spec.kappa.as_real_function()
        for a, b in zip(nodes[:-1], nodes[1:]):
            ck.append(ck[-1] + integrate(kap, a, b))
            ckg.append(ckg[-1] + integrate(kg, a, b))
        self.cum_k = np.asarray(ck)
        self.cum_kg = np.asarray(ckg)
        self.total_k = ck[-1]
        self.total_kg = ckg[-1]

        grid = np.unique(np.concatenate([np.linspace(0.0, spec.T, self._CELLS + 1), self.nodes]))
        self.grid = grid
        self.h_grid = self.incentive(grid)
        g_lo = spec.gamma.values(grid[:-1])
        g_hi = np.array([spec.gamma.left(t) for t in grid[1:]])
        self.cell_slope = (g_hi - g_lo) / np.diff(grid)

    def _cumulative(self, t: np.ndarray):
        spec = self.spec
        j = np.clip(np.searchsorted(self.nodes, t, side="right") - 1, 0, len(self.nodes) - 1)
        a = self.nodes[j]
        m = 0.5 * (a + t)
        h = (t - a) / 6.0
        ka, km, kt = spec.kappa.values(a), spec.kappa.values(m), spec.kappa.values(t)
        ga, gm, gt = spec.gamma.values(a), spec.gamma.values(m), spec.gamma.values(t)
        ik = self.cum_k[j] + h * (ka + 4.0 * km + kt)
        ikg = self.cum_kg[j] + h * (ka * ga + 4.0 * km * gm + kt * gt)
        return ik, ikg

    def incentive(self, t) -> np.ndarray:
        """int_t^T kappa (gamma(u) - gamma(t)) du, without the |A1| scale."""
        t = np.asarray(t, dtype=float)
        ik, ikg = self._cumulative(t)
        return (self.total_kg - ikg) - self.spec.gamma.values(t) * (self.total_k - ik)

    def _first_time_below(self, q: np.ndarray) -> np.ndarray:
        """inf{t : h(t) <= q} for each q, assuming h(0) > q."""
        # first grid index with h <= q; h is nonincreasing, h(T) = 0 < q
        j = np.searchsorted(-self.h_grid, -q, side="left")
        j = np.clip(j, 1, len(self.grid) - 1)
        a, b = self.grid[j - 1], self.grid[j]
        slope = self.cell_slope[j - 1]
        g_a = self.spec.gamma.values(a)
        flat = slope <= 0.0
        t = a.copy()
        for _ in range(self._NEWTON_STEPS):
            ik, ikg = self._cumulative(t)
            tail_k = self.total_k - ik
            h = (self.total_kg - ikg) - (g_a + slope * (t - a)) * tail_k
            dh = -slope * tail_k
            step = np.where(flat | (dh >= 0.0), 0.0, (h - q) / np.where(dh < 0.0, dh, -1.0))
            t = np.clip(t - step, a, b)
        return np.where(flat, b, t)

    def solve(self, A1, lam: float):
        """Return ``(tau, level, trade)`` arrays for deviations ``A1``."""
        spec = self.spec
        A1 = np.abs(np.asarray(A1, dtype=float))
        scale = A1 * (1.0 + 2.0 * spec.c1) / (1.0 + spec.c1)
        trade = scale * self.total_kg > lam
        q = np.where(trade, lam / np.where(trade, scale, 1.0), np.inf)

        active = trade & (self.h_grid[0] > q)
        tau = np.zeros_like(A1)
        if np.any(active):
            tau[active] = self._first_time_below(q[active])

        ik, ikg = self._cumulative(tau)
        tail_k = self.total_k - ik
        level = np.where(trade, ((self.total_kg - ikg) - np.where(trade, q, 0.0)) / np.where(trade, tail_k, 1.0), 0.0)
        return tau, level, trade
