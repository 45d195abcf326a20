"""Market inputs: penalty intensity, target trajectory, volatility, trading targets."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .errors import (
    DomainError,
    MonotonicityError,
    ParameterError,
    PositivityError,
    ValidationError,
)
from .numerics import integrate, Real1DFunction

KINDS = ("twap", "constant", "step", "linear")

_DENSE_SAMPLES = 1001


@dataclass(frozen=True)
class PiecewiseFunction:
    """Deterministic function of time from a closed family.

    kind
        ``twap`` (t/T), ``constant``, ``step`` (right-continuous table) or
        ``linear`` (piecewise-linear interpolation of the table).
    table
        Sorted ``(time, value)`` nodes for the table kinds. Values are held
        flat outside the node range.
    """

    kind: str
    value: float = 0.0
    table: Tuple[Tuple[float, float], ...] = ()
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("step", "linear"):
            if not self.table:
                raise ValueError(f"{self.kind} function requires a non-empty table")
            table = tuple((float(t), float(v)) for t, v in self.table)
            times = [t for t, _ in table]
            if any(t1 >= t2 for t1, t2 in zip(times[:-1], times[1:])):
                raise ValueError("table times must be strictly increasing")
            object.__setattr__(self, "table", table)
        object.__setattr__(self, "_times", [t for t, _ in self.table])
        object.__setattr__(self, "_vals", [v for _, v in self.table])
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "horizon", float(self.horizon))

    def __call__(self, t: float) -> float:
        kind = self.kind
        if kind == "constant":
            return self.value
        if kind == "twap":
            return t / self.horizon
        times = self._times
        vals = self._vals
        if kind == "step":
            k = bisect.bisect_right(times, t) - 1
            return vals[max(k, 0)]
        return _interp(times, vals, t)

    def left(self, t: float) -> float:
        """Left limit f(t-); differs from ``f(t)`` only at step nodes."""
        if self.kind != "step":
            return self(t)
        k = bisect.bisect_left(self._times, t) - 1
        return self._vals[max(k, 0)]

    def values(self, t) -> np.ndarray:
        """Vectorised right-continuous evaluation."""
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "twap":
            return t / self.horizon
        times = np.asarray(self._times)
        vals = np.asarray(self._vals)
        if self.kind == "step":
            k = np.searchsorted(times, t, side="right") - 1
            return vals[np.clip(k, 0, None)]
        return np.interp(t, times, vals)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        if self.kind in ("step", "linear"):
            return tuple(t for t, _ in self.table if 0.0 < t < self.horizon)
        return ()

    def as_real_function(self) -> Real1DFunction:
        return Real1DFunction(self.__call__, self.breakpoints, self.left)

    def to_dict(self) -> dict:
        if self.kind == "twap":
            return {"kind": "twap"}
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": self.kind, "table": [[t, v] for t, v in self.table]}

    @classmethod
    def from_dict(cls, d, horizon: float) -> "PiecewiseFunction":
        if isinstance(d, (int, float)):
            return constant(d, horizon)
        kind = str(d.get("kind", "constant")).lower()
        kind = {"piecewise-linear": "linear", "step-table": "step"}.get(kind, kind)
        return cls(
            kind=kind,
            value=d.get("value", 0.0),
            table=tuple(tuple(row) for row in d.get("table", ())),
            horizon=horizon,
        )


def _interp(times, vals, t):
    if t <= times[0]:
        return vals[0]
    if t >= times[-1]:
        return vals[-1]
    k = bisect.bisect_right(times, t) - 1
    t0, t1 = times[k], times[k + 1]
    w = (t - t0) / (t1 - t0)
    return vals[k] + w * (vals[k + 1] - vals[k])


# TrajectoryFn (gamma) and IntensityFn (kappa) share one representation;
# their invariants are enforced by ``validate``.
TrajectoryFn = PiecewiseFunction
IntensityFn = PiecewiseFunction


def twap(horizon: float = 1.0) -> PiecewiseFunction:
    return PiecewiseFunction("twap", horizon=horizon)


def constant(value: float, horizon: float = 1.0) -> PiecewiseFunction:
    return PiecewiseFunction("constant", value=value, horizon=horizon)


def step(table, horizon: float = 1.0) -> PiecewiseFunction:
    return PiecewiseFunction("step", table=tuple(table), horizon=horizon)


def linear(table, horizon: float = 1.0) -> PiecewiseFunction:
    return PiecewiseFunction("linear", table=tuple(table), horizon=horizon)


@dataclass(frozen=True)
class MarketSpec:
    """Model inputs shared by both agents.

    ``sigma`` is the dividend volatility (constant or deterministic table);
    it only affects the martingale part of the price.
    """

    T: float
    n: float
    c1: float
    kappa: PiecewiseFunction
    gamma: PiecewiseFunction
    dividend_mean: float = 0.0
    sigma: PiecewiseFunction = field(default_factory=lambda: constant(0.0))

    def __post_init__(self):
        for name in ("kappa", "gamma", "sigma"):
            fn = getattr(self, name)
            if isinstance(fn, (int, float)):
                fn = constant(fn)
            if fn.horizon != self.T:
                fn = replace(fn, horizon=self.T)
            object.__setattr__(self, name, fn)

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return tuple(sorted(set(self.kappa.breakpoints) | set(self.gamma.breakpoints)))

    @property
    def c1_warning(self) -> Optional[str]:
        if -0.5 < self.c1 < 0:
            return f"c1={self.c1} is negative: buying raises the perceived drift"
        return None

    def to_dict(self) -> dict:
        return {
            "market": {
                "T": self.T,
                "n": self.n,
                "c1": self.c1,
                "dividend_mean": self.dividend_mean,
                "sigma": self.sigma.to_dict(),
            },
            "kappa": self.kappa.to_dict(),
            "gamma": self.gamma.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarketSpec":
        m = d["market"]
        T = float(m["T"])
        return cls(
            T=T,
            n=float(m["n"]),
            c1=float(m["c1"]),
            kappa=PiecewiseFunction.from_dict(d.get("kappa", {"kind": "constant", "value": 1.0}), T),
            gamma=PiecewiseFunction.from_dict(d.get("gamma", {"kind": "twap"}), T),
            dividend_mean=float(m.get("dividend_mean", 0.0)),
            sigma=PiecewiseFunction.from_dict(m.get("sigma", 0.0), T),
        )


def twap_example_spec(c1: float = 0.0, dividend_mean: float = 100.0, sigma: float = 1.0) -> MarketSpec:
    """The TWAP configuration T=1, n=100, kappa=1, gamma(t)=t."""
    return MarketSpec(
        T=1.0,
        n=100.0,
        c1=c1,
        kappa=constant(1.0),
        gamma=twap(1.0),
        dividend_mean=dividend_mean,
        sigma=constant(sigma),
    )


@dataclass(frozen=True)
class TargetPair:
    a1: float
    a2: float


@dataclass(frozen=True)
class Deviations:
    a1: float
    a2: float
    a_sigma: float
    A1: float
    A2: float

    def A(self, i: int) -> float:
        return self.A1 if i == 1 else self.A2

    def a(self, i: int) -> float:
        return self.a1 if i == 1 else self.a2


def deviations(targets: TargetPair) -> Deviations:
    """Aggregate target and per-agent deviations from half of it.

    ``A1`` is computed as ``(a1 - a2) / 2`` and ``A2`` as its exact negation,
    so ``A1 + A2 == 0`` holds in floating point.
    """
    a1, a2 = float(targets.a1), float(targets.a2)
    if not (math.isfinite(a1) and math.isfinite(a2)):
        raise ParameterError([f"targets must be finite, got a1={a1}, a2={a2}"])
    A1 = 0.5 * (a1 - a2)
    return Deviations(a1=a1, a2=a2, a_sigma=a1 + a2, A1=A1, A2=-A1)


def _check_domain(spec: MarketSpec, t: float):
    if not (0.0 <= t <= spec.T):
        raise DomainError(f"t={t} outside [0, {spec.T}]")


def eval_gamma(spec: MarketSpec, t: float) -> float:
    _check_domain(spec, t)
    return spec.gamma(t)


def eval_kappa(spec: MarketSpec, t: float) -> float:
    _check_domain(spec, t)
    return spec.kappa(t)


def _sample_times(fn: PiecewiseFunction, T: float) -> np.ndarray:
    nodes = [t for t, _ in fn.table if 0.0 <= t <= T]
    return np.unique(np.concatenate([np.linspace(0.0, T, _DENSE_SAMPLES), nodes]))


def validate(spec: MarketSpec) -> MarketSpec:
    """Check every invariant of the market inputs.

    Returns ``spec`` unchanged when valid. Otherwise raises the error class
    of the first problem found, carrying the full list of violations.
    """
    found = []  # (error class, message)

    def bad(cls, msg):
        found.append((cls, msg))

    if not (math.isfinite(spec.T) and spec.T > 0):
        bad(ParameterError, f"T must be positive, got {spec.T}")
    if not (math.isfinite(spec.n) and spec.n > 0):
        bad(ParameterError, f"n must be positive, got {spec.n}")
    if not (math.isfinite(spec.c1) and spec.c1 > -0.5):
        bad(ParameterError, f"c1 must exceed -1/2, got {spec.c1}")
    if not math.isfinite(spec.dividend_mean):
        bad(ParameterError, f"dividend_mean must be finite, got {spec.dividend_mean}")
    if found:
        raise found[0][0]([m for _, m in found])

    for name, fn in (("kappa", spec.kappa), ("gamma", spec.gamma), ("sigma", spec.sigma)):
        if fn.kind in ("step", "linear") and fn.table[0][0] > 0.0:
            bad(ParameterError, f"{name} table must start at t=0")
    if spec.kappa.kind == "twap":
        bad(ParameterError, "kappa cannot be of kind twap")
    if spec.sigma.kind == "twap":
        bad(ParameterError, "sigma cannot be of kind twap")

    ts = _sample_times(spec.gamma, spec.T)
    g = spec.gamma.values(ts)
    if np.any(~np.isfinite(g)) or np.any(g < 0.0) or np.any(g > 1.0):
        bad(ParameterError, "gamma must take values in [0, 1]")
    drops = np.nonzero(np.diff(g) < 0.0)[0]
    if drops.size:
        k = drops[0]
        bad(MonotonicityError, f"gamma decreases between t={ts[k]} and t={ts[k + 1]}")

    ts = _sample_times(spec.kappa, spec.T)
    inner = ts[(ts > 0.0) & (ts < spec.T)]
    k_vals = spec.kappa.values(inner)
    if np.any(~np.isfinite(k_vals)) or np.any(k_vals <= 0.0):
        t_bad = inner[np.nonzero(~(k_vals > 0.0))[0][0]]
        bad(PositivityError, f"kappa must be positive on (0, T); fails at t={t_bad}")
    else:
        total = integrate(spec.kappa.as_real_function(), 0.0, spec.T)
        if not math.isfinite(total):
            bad(ParameterError, "integral of kappa over [0, T] is not finite")

    s_vals = spec.sigma.values(_sample_times(spec.sigma, spec.T))
    if np.any(~np.isfinite(s_vals)) or np.any(s_vals < 0.0):
        bad(ParameterError, "sigma must be finite and nonnegative")

    if found:
        raise found[0][0]([m for _, m in found])
    return spec


__all__ = [
    "PiecewiseFunction",
    "TrajectoryFn",
    "IntensityFn",
    "MarketSpec",
    "TargetPair",
    "Deviations",
    "ValidationError",
    "twap",
    "constant",
    "step",
    "linear",
    "twap_example_spec",
    "deviations",
    "eval_gamma",
    "eval_kappa",
    "validate",
]
