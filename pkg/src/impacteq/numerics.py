"""Deterministic scalar numerics: quadrature, monotone level search, 1-D maximization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

from .errors import ContractViolation, IntegrationError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0

DEFAULT_REL_TOL = 1e-10
_MIN_DEPTH = 2
_MAX_DEPTH = 50


@dataclass(frozen=True)
class Real1DFunction:
    """A real function of time with known discontinuity/kink locations.

    ``left_limit`` optionally returns f(u-). It is used at panel right
    endpoints that coincide with a breakpoint, so a jump never leaks into
    the panel to its left.
    """

    evaluator: Callable[[float], float]
    breakpoints: Tuple[float, ...] = ()
    left_limit: Optional[Callable[[float], float]] = None

    def __call__(self, u: float) -> float:
        return self.evaluator(u)


def as_function(f) -> Real1DFunction:
    if isinstance(f, Real1DFunction):
        return f
    return Real1DFunction(f)


def _checked(fn: Callable[[float], float]) -> Callable[[float], float]:
    def wrapped(u):
        v = fn(u)
        if not math.isfinite(v):
            raise IntegrationError(u, v)
        return v

    return wrapped


def _simpson_panel(f, a, b, fa, fb, eps):
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    parts = []
    stack = [(a, b, fa, fm, fb, whole, eps, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = 0.5 * (a + b)
        flm = f(0.5 * (a + m))
        frm = f(0.5 * (m + b))
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if depth >= _MAX_DEPTH or (depth >= _MIN_DEPTH and abs(delta) <= 15.0 * eps):
            parts.append(left + right + delta / 15.0)
        else:
            stack.append((m, b, fm, frm, fb, right, 0.5 * eps, depth + 1))
            stack.append((a, m, fa, flm, fm, left, 0.5 * eps, depth + 1))
    return parts


def integrate(f, a: float, b: float, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Adaptive composite Simpson quadrature of ``f`` over ``[a, b]``.

    The interval is first split at every breakpoint of ``f`` lying strictly
    inside ``(a, b)``; each resulting panel is then refined independently.
    The target accuracy is ``rel_tol * (1 + |I|)``.

    Raises
    ------
    IntegrationError
        If ``f`` returns a non-finite value; the offending abscissa is
        attached to the exception.
    """
    if b < a:
        raise ValueError(f"integrate requires a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0
    f = as_function(f)
    ev = _checked(f.evaluator)
    left = _checked(f.left_limit) if f.left_limit is not None else ev

    cuts = [a] + [p for p in f.breakpoints if a < p < b] + [b]
    panels = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi > lo:
            panels.append((lo, hi, ev(lo), left(hi)))

    # rough magnitude for the absolute target
    est = 0.0
    for lo, hi, flo, fhi in panels:
        est += (hi - lo) / 6.0 * (flo + 4.0 * ev(0.5 * (lo + hi)) + fhi)
    eps_total = rel_tol * (1.0 + abs(est))

    pieces = []
    span = b - a
    for lo, hi, flo, fhi in panels:
        pieces.extend(_simpson_panel(ev, lo, hi, flo, fhi, eps_total * (hi - lo) / span))
    return math.fsum(pieces)


def first_time_below(g, level: float, lo: float, hi: float, tol: Optional[float] = None) -> float:
    """Locate ``inf{t in [lo, hi] : g(t) <= level}`` for nonincreasing ``g``.

    Bisection on the indicator ``{g <= level}``, which stays monotone even
    where ``g`` jumps. Returns ``lo`` when ``g(lo) <= level`` and ``hi`` when
    ``g`` never drops to ``level`` on the interval.
    """
    if tol is None:
        tol = 1e-12 * (hi - lo)
    if not tol > 0:
        raise ValueError("tol must be positive")
    g = as_function(g)
    g_lo = g(lo)
    if g_lo <= level:
        return lo
    g_hi = g(hi)
    if g_hi > level:
        return hi
    slack = 1e-9 * max(1.0, abs(g_lo), abs(g_hi))
    if g_hi > g_lo + slack:
        raise ContractViolation(f"g increases on [{lo}, {hi}]: g(lo)={g_lo}, g(hi)={g_hi}")

    a, b = lo, hi
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        gm = g(m)
        if gm > g_lo + slack or gm < g_hi - slack:
            raise ContractViolation(
                f"non-monotone sample g({m})={gm} outside [{g_hi}, {g_lo}]"
            )
        if gm <= level:
            b, g_hi = m, gm
        else:
            a, g_lo = m, gm
    return b


def golden_section_max(f, a: float, b: float, tol: float) -> Tuple[float, float]:
    """Golden-section search for a maximum of ``f`` on ``[a, b]``."""
    h = b - a
    if h <= tol:
        x = 0.5 * (a + b)
        return x, f(x)
    n = int(math.ceil(math.log(tol / h) / math.log(INV_PHI)))
    c = a + INV_PHI_SQ * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    for _ in range(n - 1):
        if yc > yd:
            b, d, yd = d, c, yc
            h *= INV_PHI
            c = a + INV_PHI_SQ * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h *= INV_PHI
            d = a + INV_PHI * h
            yd = f(d)
    return (c, yc) if yc > yd else (d, yd)


def maximize_1d(
    f,
    lo: float,
    hi: float,
    coarse_points: int = 101,
    refine_tol: float = 1e-8,
    n_starts: int = 1,
    grid: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """Coarse grid scan followed by golden-section refinement.

    The ``n_starts`` best grid points each seed a refinement inside their
    neighbouring bracket; the best of all refined and grid values is
    returned as ``(argmax, max)``. ``grid`` overrides the uniform grid.
    """
    if not lo < hi:
        raise ValueError("maximize_1d requires lo < hi")
    if grid is None:
        if coarse_points < 3:
            raise ValueError("coarse_points must be >= 3")
        step = (hi - lo) / (coarse_points - 1)
        xs = [lo + k * step for k in range(coarse_points)]
        xs[-1] = hi
    else:
        xs = list(grid)
    ys = [f(x) for x in xs]

    order = sorted(range(len(xs)), key=lambda k: (-ys[k], k))
    best_x, best_y = xs[order[0]], ys[order[0]]
    for k in order[:n_starts]:
        a = xs[max(k - 1, 0)]
        b = xs[min(k + 1, len(xs) - 1)]
        x, y = golden_section_max(f, a, b, refine_tol)
        if y > best_y:
            best_x, best_y = x, y
    return best_x, best_y
