"""Exchange revenue: realised profit, expected profit under target priors, optimal fee."""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .equilibrium import EquilibriumKernel, kappa_integral, solve
from .errors import ConfigurationError, FlatObjectiveWarning, ParameterError
from .model import Deviations, MarketSpec, deviations, TargetPair
from .numerics import Real1DFunction, integrate, maximize_1d

MARGINAL_KINDS = ("point", "uniform", "normal")

# draws used to estimate prior moments/quantiles for the automatic fee range
_RANGE_DRAWS = 100_000


@dataclass(frozen=True)
class Marginal:
    """Distribution of a single trading target."""

    kind: str
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    mean: float = 0.0
    sd: float = 0.0

    def __post_init__(self):
        if self.kind not in MARGINAL_KINDS:
            raise ConfigurationError(f"unknown marginal kind {self.kind!r}")
        if self.kind == "uniform" and not self.lo < self.hi:
            raise ConfigurationError(f"uniform marginal needs lo < hi, got ({self.lo}, {self.hi})")
        if self.kind == "normal" and not self.sd >= 0:
            raise ConfigurationError(f"normal marginal needs sd >= 0, got {self.sd}")

    @property
    def is_point(self) -> bool:
        return self.kind == "point" or (self.kind == "normal" and self.sd == 0)

    def expectation(self) -> float:
        if self.kind == "point":
            return self.value
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        return self.mean

    def variance(self) -> float:
        if self.kind == "point":
            return 0.0
        if self.kind == "uniform":
            return (self.hi - self.lo) ** 2 / 12.0
        return self.sd**2

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "point":
            return np.full(size, self.value)
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        return rng.normal(self.mean, self.sd, size)

    def to_dict(self) -> dict:
        if self.kind == "point":
            return {"kind": "point", "value": self.value}
        if self.kind == "uniform":
            return {"kind": "uniform", "lo": self.lo, "hi": self.hi}
        return {"kind": "normal", "mean": self.mean, "sd": self.sd}

    @classmethod
    def from_dict(cls, d) -> "Marginal":
        if isinstance(d, (int, float)):
            return cls("point", value=float(d))
        kind = d.get("kind", "point")
        return cls(kind, **{k: float(v) for k, v in d.items() if k != "kind"})


def point(value: float) -> Marginal:
    return Marginal("point", value=value)


def uniform(lo: float, hi: float) -> Marginal:
    return Marginal("uniform", lo=lo, hi=hi)


def normal(mean: float, sd: float) -> Marginal:
    return Marginal("normal", mean=mean, sd=sd)


@dataclass(frozen=True)
class TargetPrior:
    """Independent priors on the two targets, independent of the price driver."""

    a1: Marginal
    a2: Marginal

    @property
    def is_degenerate(self) -> bool:
        return self.a1.is_point and self.a2.is_point

    def second_moment_A1(self) -> float:
        """E[A1^2] with A1 = (a1 - a2) / 2."""
        m = 0.5 * (self.a1.expectation() - self.a2.expectation())
        v = 0.25 * (self.a1.variance() + self.a2.variance())
        return v + m * m

    def sample_A1(self, rng: np.random.Generator, size: int) -> np.ndarray:
        a1 = self.a1.sample(rng, size)
        a2 = self.a2.sample(rng, size)
        return 0.5 * (a1 - a2)

    def to_dict(self) -> dict:
        return {"a1": self.a1.to_dict(), "a2": self.a2.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetPrior":
        return cls(Marginal.from_dict(d["a1"]), Marginal.from_dict(d["a2"]))


def example_prior() -> TargetPrior:
    """a1 uniform on (50, 55), a2 = 50."""
    return TargetPrior(uniform(50.0, 55.0), point(50.0))


@dataclass
class ProfitCurve:
    lambdas: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    method: str = "quadrature"

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if not (len(self.lambdas) == len(self.values) == len(self.stderr)):
            raise ValueError("lambdas, values and stderr must have equal length")
        if np.any(np.diff(self.lambdas) <= 0):
            raise ValueError("lambdas must be strictly increasing")

    def argmax(self) -> Tuple[float, float]:
        k = int(np.argmax(self.values))
        return float(self.lambdas[k]), float(self.values[k])

    def rows(self):
        for lam, v, se in zip(self.lambdas, self.values, self.stderr):
            yield float(lam), float(v), float(se)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "expected_profit", "stderr"])
        for row in self.rows():
            w.writerow([format(x, ".17g") for x in row])
        return buf.getvalue()


@dataclass
class FeeOptimum:
    lambda_hat: float
    value: float
    method: str
    evaluations: int = 0
    search_range: Tuple[float, float] = (math.nan, math.nan)

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "value": self.value,
            "method": self.method,
            "evaluations": self.evaluations,
            "search_lo": self.search_range[0],
            "search_hi": self.search_range[1],
        }


# realised profit --------------------------------------------------------------


def profit(spec: MarketSpec, dev: Deviations, lam: float) -> float:
    """Fees collected from both agents: 2 lam |A1| gamma_tilde(tau) / (1 + c1)."""
    sol = solve(spec, dev, lam)
    if not sol.trade_occurs:
        return 0.0
    return 2.0 * lam * abs(dev.A1) / (1.0 + spec.c1) * sol.gamma_tilde_terminal


def lambda_max(spec: MarketSpec, dev: Deviations) -> float:
    """Fee level at and above which trade never occurs: 2 |A1| int kappa."""
    return 2.0 * abs(dev.A1) * kappa_integral(spec, 0.0, spec.T)


def lipschitz_constant(spec: MarketSpec, dev: Deviations, lam_lo: float, lam_hi: float) -> float:
    """Bound L with |Profit(l1) - Profit(l2)| <= L |l1 - l2| on [lam_lo, lam_hi]."""
    sol = solve(spec, dev, lam_lo)
    tail = kappa_integral(spec, sol.tau, spec.T)
    c1 = spec.c1
    return 2.0 * (
        lam_hi / ((1.0 + 2.0 * c1) * tail) + abs(dev.A1) * spec.gamma(spec.T) / (1.0 + c1)
    )


def twap_profit_closed_form(A1: float, c1: float, lam: float) -> float:
    """Profit for T=1, kappa=1, gamma(t)=t, valid for A1 >= 0.

    2 max(0, lam A1/(1+c1) - lam sqrt(2 lam A1 / ((1+c1)(1+2c1))))
    """
    if A1 < 0:
        raise ValueError("closed form is stated for A1 >= 0; use profit() for A1 < 0")
    if not (c1 > -0.5 and lam > 0):
        raise ValueError("requires c1 > -1/2 and lam > 0")
    if A1 == 0:
        return 0.0
    bracket = lam * A1 / (1.0 + c1) - lam * math.sqrt(2.0 * lam * A1 / ((1.0 + c1) * (1.0 + 2.0 * c1)))
    return 2.0 * max(0.0, bracket)


# expected profit ----------------------------------------------------------------


def profit_batch(kernel: EquilibriumKernel, A1: np.ndarray, lam: float) -> np.ndarray:
    """Vectorised profit for an array of deviations."""
    _, level, trade = kernel.solve(A1, lam)
    c1 = kernel.spec.c1
    return np.where(trade, 2.0 * lam * np.abs(A1) / (1.0 + c1) * level, 0.0)


def _mc_estimate(values: np.ndarray) -> Tuple[float, float]:
    if values.size and np.all(values == values[0]):
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def expected_profit_mc(
    spec: MarketSpec, prior: TargetPrior, lam: float, N: int = 100_000, seed: int = 0
) -> Tuple[float, float]:
    """Monte Carlo estimate of E[Profit(lam)] and its standard error.

    Targets are drawn with ``numpy.random.default_rng(seed)``, a1 first then
    a2, so the same seed reuses the same draws at every fee level.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if prior.is_degenerate:
        dev = deviations(TargetPair(prior.a1.expectation(), prior.a2.expectation()))
        return profit(spec, dev, lam), 0.0
    A1 = prior.sample_A1(np.random.default_rng(seed), N)
    return _mc_estimate(profit_batch(EquilibriumKernel(spec), A1, lam))


_EXAMPLE_UPPER = math.sqrt(2.5)


def expected_profit_quadrature_example(c1: float, lam: float) -> float:
    """E[Profit(lam)] for the TWAP example with a1 ~ U(50, 55), a2 = 50.

    (8/5) int_0^sqrt(2.5) lam y^2/(1+c1) max(0, y - sqrt(2 lam (1+c1)/(1+2c1))) dy
    """
    if not (c1 > -0.5 and lam > 0):
        raise ValueError("requires c1 > -1/2 and lam > 0")
    kink = math.sqrt(2.0 * lam * (1.0 + c1) / (1.0 + 2.0 * c1))
    if kink >= _EXAMPLE_UPPER:
        return 0.0
    w = lam / (1.0 + c1)
    f = Real1DFunction(lambda y: w * y * y * max(0.0, y - kink), (kink,))
    return 1.6 * integrate(f, 0.0, _EXAMPLE_UPPER)


def matches_example(spec: MarketSpec, prior: TargetPrior) -> bool:
    """True when the closed-form expected-profit integral applies."""
    return (
        spec.T == 1.0
        and spec.kappa.kind == "constant"
        and spec.kappa.value == 1.0
        and spec.gamma.kind == "twap"
        and prior.a1 == uniform(50.0, 55.0)
        and prior.a2 == point(50.0)
    )


def _require_example(spec, prior):
    if not matches_example(spec, prior):
        raise ConfigurationError(
            "quadrature method needs T=1, kappa=1, TWAP gamma, a1~U(50,55), a2=50; use method='mc'"
        )


def profit_curve(
    spec: MarketSpec,
    prior: TargetPrior,
    lambdas: Sequence[float],
    method: str = "quadrature",
    seed: int = 0,
    samples: int = 100_000,
    workers: int = 1,
) -> ProfitCurve:
    """Expected profit on a fee grid. MC mode uses one set of draws for all fees."""
    lambdas = np.asarray(lambdas, dtype=float)
    if method == "quadrature":
        _require_example(spec, prior)
        vals = [expected_profit_quadrature_example(spec.c1, lam) for lam in lambdas]
        return ProfitCurve(lambdas, vals, np.zeros_like(lambdas), method)
    if method != "mc":
        raise ConfigurationError(f"unknown method {method!r}")

    if prior.is_degenerate:
        dev = deviations(TargetPair(prior.a1.expectation(), prior.a2.expectation()))
        vals = [profit(spec, dev, lam) for lam in lambdas]
        return ProfitCurve(lambdas, vals, np.zeros_like(lambdas), method)

    A1 = prior.sample_A1(np.random.default_rng(seed), samples)
    kernel = EquilibriumKernel(spec)

    def one(lam):
        return _mc_estimate(profit_batch(kernel, A1, lam))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, lambdas))
    else:
        results = [one(lam) for lam in lambdas]
    return ProfitCurve(lambdas, [r[0] for r in results], [r[1] for r in results], method)


def auto_range(spec: MarketSpec, prior: TargetPrior, seed: int = 0) -> Tuple[float, float]:
    """(eps, 99.9% quantile of lambda_max) estimated from seeded prior draws."""
    total_k = kappa_integral(spec, 0.0, spec.T)
    if prior.is_degenerate:
        lmax = 2.0 * abs(0.5 * (prior.a1.expectation() - prior.a2.expectation())) * total_k
        return 1e-6 * lmax, lmax
    A1 = np.abs(prior.sample_A1(np.random.default_rng(seed), _RANGE_DRAWS))
    eps = 1e-6 * 2.0 * float(A1.mean()) * total_k
    hi = float(np.quantile(2.0 * A1 * total_k, 0.999))
    return eps, hi


def optimal_fee(
    spec: MarketSpec,
    prior: TargetPrior,
    lam_range: Optional[Tuple[float, float]] = None,
    method: str = "quadrature",
    seed: int = 0,
    samples: int = 100_000,
    coarse_points: int = 200,
    refine_tol: float = 1e-7,
    n_starts: int = 3,
) -> FeeOptimum:
    """Locate the fee maximising expected exchange profit.

    A coarse grid is scanned, then golden-section search refines inside the
    brackets of the ``n_starts`` best grid points (no unimodality assumed).
    When the objective is zero on the whole grid a ``FlatObjectiveWarning``
    is issued and ``lambda_hat`` is NaN.
    """
    label = {"quadrature": "quadrature-exact", "mc": "grid+golden"}.get(method)
    if label is None:
        raise ConfigurationError(f"unknown method {method!r}")
    if prior.second_moment_A1() == 0:
        warnings.warn("prior puts no mass on trade: expected profit is identically zero", FlatObjectiveWarning)
        return FeeOptimum(math.nan, 0.0, label, 0, (math.nan, math.nan))
    lo, hi = lam_range if lam_range is not None else auto_range(spec, prior, seed)
    if not 0 < lo < hi:
        raise ParameterError([f"invalid fee search range ({lo}, {hi})"])

    if method == "quadrature":
        _require_example(spec, prior)

        def objective(lam):
            return expected_profit_quadrature_example(spec.c1, lam)

    elif prior.is_degenerate:
        dev = deviations(TargetPair(prior.a1.expectation(), prior.a2.expectation()))

        def objective(lam):
            return profit(spec, dev, lam)

    else:
        A1 = prior.sample_A1(np.random.default_rng(seed), samples)
        kernel = EquilibriumKernel(spec)

        def objective(lam):
            return float(profit_batch(kernel, A1, lam).mean())

    calls = [0]
    grid_vals = []

    def counted(lam):
        calls[0] += 1
        v = objective(lam)
        if calls[0] <= coarse_points:
            grid_vals.append(v)
        return v

    lam_hat, value = maximize_1d(counted, lo, hi, coarse_points, refine_tol, n_starts)
    if max(grid_vals) <= 0.0:
        warnings.warn("expected profit is zero on the whole fee grid", FlatObjectiveWarning)
        return FeeOptimum(math.nan, 0.0, label, calls[0], (lo, hi))
    return FeeOptimum(lam_hat, value, label, calls[0], (lo, hi))
