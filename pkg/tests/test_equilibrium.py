import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import LAM, TAU_EXAMPLE
from strategies import devs, lams, specs
from impacteq.equilibrium import (
    EquilibriumKernel,
    adjoint,
    deterrence_threshold,
    equilibrium_drift,
    holdings,
    impact_coefficients,
    initial_price,
    last_trading_time,
    perceived_drift,
    solve,
    terminal_level,
)
from impacteq.errors import ParameterError
from impacteq.model import MarketSpec, TargetPair, constant, deviations, step, twap_example_spec

import oracles


class TestImpactCoefficients:
    def test_price_taking(self, spec, dev):
        c0, c2 = impact_coefficients(spec, dev)
        assert c2 == 0.0
        assert_allclose(c0(0.6), -0.5 * 0.6 * 2.5)

    def test_c1_one(self, dev):
        c0, c2 = impact_coefficients(twap_example_spec(c1=1.0), dev)
        assert_allclose(c0(1.0), 98.125)
        assert c2 == 0.5

    def test_balanced_aggregate(self):
        d = deviations(TargetPair(60.0, 40.0))
        c0, _ = impact_coefficients(twap_example_spec(c1=0.7), d)
        assert all(c0(t) == pytest.approx(70.0) for t in (0.0, 0.5, 1.0))


class TestThreshold:
    def test_example(self, spec, dev):
        assert_allclose(deterrence_threshold(spec, dev), 0.625, rtol=1e-14)

    def test_zero_deviation(self, spec, zero_dev):
        assert deterrence_threshold(spec, zero_dev) == 0.0

    def test_large_c1_limit(self, dev):
        chi = deterrence_threshold(twap_example_spec(c1=1e6), dev)
        assert chi < 2 * 1.25 * 0.5
        assert_allclose(chi, 2 * 1.25 * 0.5, rtol=1e-5)


class TestLastTradingTime:
    def test_example(self, spec, dev):
        assert_allclose(last_trading_time(spec, dev, LAM), TAU_EXAMPLE, atol=1e-8)
        assert_allclose(TAU_EXAMPLE, 0.71716, atol=1e-5)

    def test_zero_deviation(self, spec, zero_dev):
        assert last_trading_time(spec, zero_dev, 0.3) == 0.0

    def test_fee_above_threshold(self, spec, dev):
        assert last_trading_time(spec, dev, 0.625) == 0.0
        assert last_trading_time(spec, dev, 0.9) == 0.0

    def test_fee_must_be_positive(self, spec, dev):
        with pytest.raises(ParameterError):
            last_trading_time(spec, dev, 0.0)

    @given(st.floats(0.01, 5.0), st.floats(-0.4, 3.0), st.floats(1e-3, 2.0))
    def test_twap_closed_form(self, A1, c1, lam):
        d = deviations(TargetPair(50.0 + 2 * A1, 50.0))
        tau = last_trading_time(twap_example_spec(c1=c1), d, lam)
        assert_allclose(tau, oracles.twap_tau(A1, c1, lam), atol=1e-8)

    def test_jump_gamma_uses_indicator(self):
        # gamma jumps 0 -> 1 at 0.5; incentive drops from 0.5 |A1| scale to 0 there
        spec = MarketSpec(1.0, 100.0, 0.0, constant(1.0), step([(0.0, 0.0), (0.5, 1.0)]))
        d = deviations(TargetPair(52.0, 50.0))
        tau = last_trading_time(spec, d, 0.1)
        # incentive g(t) = 0.5 * (1 - 0.5) for t < 0.5, then 0
        assert_allclose(tau, 0.5, atol=1e-10)


class TestTerminalLevel:
    def test_equals_tau_for_twap(self, sol):
        assert_allclose(sol.gamma_tilde_terminal, TAU_EXAMPLE, atol=1e-8)

    def test_no_trade_is_zero(self, no_trade_sol):
        assert no_trade_sol.gamma_tilde(0.5) == 0.0

    def test_function_form(self, spec, dev):
        f = terminal_level(spec, dev, LAM)
        assert f(0.3) == 0.3
        assert_allclose(f(0.95), TAU_EXAMPLE, atol=1e-8)

    @given(specs(), devs(), lams)
    def test_continuity_at_tau(self, spec, dev, lam):
        """When gamma is continuous and the tau equation binds, gamma_tilde(tau) = gamma(tau)."""
        assume(spec.gamma.kind != "step")
        sol = solve(spec, dev, lam)
        assume(sol.trade_occurs and sol.tau > 0)
        assert abs(sol.gamma_tilde_terminal - spec.gamma(sol.tau)) <= 1e-7


class TestHoldings:
    def test_before_tau(self, sol):
        assert sol.holdings(0.4) == pytest.approx((50.5, 49.5), abs=1e-12)

    def test_after_tau(self, sol):
        th1, th2 = sol.holdings(0.9)
        assert_allclose(th1, 50 + 1.25 * TAU_EXAMPLE, atol=1e-8)
        assert_allclose(th1, 50.8965, atol=1e-4)
        assert th1 + th2 == 100.0

    def test_no_trade(self, no_trade_sol):
        assert not no_trade_sol.trade_occurs
        assert no_trade_sol.tau == 0.0
        for t in (0.0, 0.5, 1.0):
            assert no_trade_sol.holdings(t) == (50.0, 50.0)

    def test_module_wrapper(self, spec, dev):
        assert holdings(spec, dev, LAM, 0.4) == pytest.approx((50.5, 49.5))

    @given(specs(), devs(), lams)
    def test_structural_invariants(self, spec, dev, lam):
        sol = solve(spec, dev, lam)
        ts = np.linspace(0.0, 1.0, 201)
        half = spec.n / 2
        for t in ts:
            th1, th2 = sol.holdings(t)
            assert abs(th1 + th2 - spec.n) <= 1e-12 * spec.n
        if not sol.trade_occurs:
            assert sol.tau == 0.0
            assert all(sol.holdings(t) == (half, half) for t in ts)
            return
        pre = [t for t in ts if t < sol.tau]
        acc = [math.copysign(1, dev.A1) * (sol.theta(1, t) - half) for t in pre]
        assert all(a >= 0 for a in acc)
        assert all(b >= a - 1e-14 for a, b in zip(acc, acc[1:]))
        for t in pre:
            assert_allclose(acc[pre.index(t)], abs(dev.A1) / (1 + spec.c1) * spec.gamma(t), atol=1e-12)
        post = [sol.theta(1, t) for t in ts if t >= sol.tau]
        assert all(p == post[0] for p in post)

    @given(st.floats(0.1, 5.0), st.floats(-0.4, 3.0), st.floats(0.01, 1.0), st.floats(0.01, 0.9))
    def test_abs_deviation_decreasing_in_c1(self, A1, c1, delta, t):
        d = deviations(TargetPair(50 + 2 * A1, 50))
        lam = 1e-4
        lo, hi = solve(twap_example_spec(c1=c1), d, lam), solve(twap_example_spec(c1=c1 + delta), d, lam)
        assume(t < min(lo.tau, hi.tau) and t > 0)
        assert abs(hi.theta(1, t) - 50) < abs(lo.theta(1, t) - 50)

    @given(specs(), devs(), lams, st.floats(0.01, 0.99))
    def test_pre_tau_holdings_ignore_fee(self, spec, dev, lam, frac):
        sol = solve(spec, dev, lam)
        cheaper = solve(spec, dev, lam * frac)
        for t in np.linspace(0.0, 1.0, 51):
            if t < sol.tau:
                assert cheaper.theta(1, t) == sol.theta(1, t)

    def test_turnover_example(self, sol):
        assert_allclose(sol.turnover(1), 1.25 * TAU_EXAMPLE, atol=1e-8)
        assert sol.turnover(1) == sol.turnover(2)


class TestDrifts:
    def test_balanced_price_taking(self):
        d = deviations(TargetPair(50.0, 50.0))
        assert equilibrium_drift(twap_example_spec(), d, 0.3) == 0.0

    def test_example_terminal(self, spec, dev):
        assert_allclose(equilibrium_drift(spec, dev, 1.0), -1.25)

    def test_c1_one_balanced(self):
        d = deviations(TargetPair(50.0, 50.0))
        for t in (0.1, 0.5, 0.9):
            assert equilibrium_drift(twap_example_spec(c1=1.0), d, t) == 50.0

    def test_perceived_independent_of_holdings_when_no_impact(self, spec, dev):
        assert perceived_drift(spec, dev, 1, 10.0, 0.4) == perceived_drift(spec, dev, 1, 90.0, 0.4)

    @given(st.floats(-0.4, 3.0), st.floats(-10, 10), st.floats(0.01, 0.99))
    def test_perceived_slope(self, c1, delta, t):
        spec = twap_example_spec(c1=c1)
        d = deviations(TargetPair(52.5, 50.0))
        diff = perceived_drift(spec, d, 1, 50.0 + delta, t) - perceived_drift(spec, d, 1, 50.0, t)
        assert_allclose(diff, -c1 * delta, atol=1e-9)

    @given(specs(), devs(), lams)
    def test_consistency_before_tau(self, spec, dev, lam):
        sol = solve(spec, dev, lam)
        for t in np.linspace(0.0, 1.0, 101)[1:-1]:
            if t < sol.tau:
                mu = sol.equilibrium_drift(t)
                for i in (1, 2):
                    assert abs(sol.perceived_drift(i, sol.theta(i, t), t) - mu) <= 1e-10 * max(1.0, abs(mu))

    @given(specs(), devs(), st.floats(0.01, 2.0), st.floats(0.01, 0.99))
    def test_drift_linear_in_c1(self, spec, dev, delta, t):
        shifted = MarketSpec(spec.T, spec.n, spec.c1 + delta, spec.kappa, spec.gamma)
        diff = equilibrium_drift(shifted, dev, t) - equilibrium_drift(spec, dev, t)
        assert_allclose(diff, spec.kappa(t) * spec.n * delta / 2, rtol=1e-9, atol=1e-9)


class TestAdjoint:
    def test_pinned_before_tau(self, sol):
        for t in (0.0, 0.3, TAU_EXAMPLE - 1e-6):
            y = sol.adjoint(t)
            assert_allclose(y.Y1, LAM, atol=1e-10)
            assert_allclose(y.Y2, -LAM, atol=1e-10)

    def test_zero_at_horizon(self, sol):
        assert sol.adjoint(1.0).Y1 == 0.0

    def test_zero_deviation(self, spec, zero_dev):
        assert adjoint(spec, zero_dev, LAM, 0.3).Y1 == 0.0

    @given(specs(), devs(), lams)
    def test_bound_and_mirror(self, spec, dev, lam):
        sol = solve(spec, dev, lam)
        for t in np.linspace(0.0, 1.0, 41):
            y = sol.adjoint(float(t))
            assert abs(y.Y1) <= lam * (1 + 1e-9) + 1e-12
            assert y.Y2 == -y.Y1 or (y.Y1 == 0 and y.Y2 == 0)
            if sol.trade_occurs and t <= sol.tau:
                assert_allclose(y.Y1, lam * math.copysign(1, dev.A1), atol=1e-9)


class TestSolve:
    def test_example(self, sol):
        assert sol.trade_occurs
        assert_allclose((sol.tau, sol.chi), (TAU_EXAMPLE, 0.625), atol=1e-8)

    def test_above_threshold(self, no_trade_sol):
        assert not no_trade_sol.trade_occurs
        assert no_trade_sol.theta(1, 0.7) == 50.0

    def test_zero_deviation(self, spec, zero_dev):
        s = solve(spec, zero_dev, LAM)
        assert not s.trade_occurs and s.tau == 0.0

    def test_negative_c1_warns(self, dev):
        s = solve(twap_example_spec(c1=-0.25), dev, LAM)
        assert s.warnings

    def test_summary_keys(self, sol):
        summary = sol.summary()
        for key in ("tau", "chi", "gamma_tilde_terminal", "c0_start", "c0_end", "c2", "turnover1"):
            assert key in summary

    def test_initial_price(self, quiet_spec, dev):
        assert_allclose(initial_price(quiet_spec, dev), 100.625, rtol=1e-14)

    def test_deterministic(self, spec, dev):
        assert solve(spec, dev, 0.123) == solve(spec, dev, 0.123)


class TestKernel:
    @given(specs(), st.lists(st.floats(-5, 5), min_size=1, max_size=20), lams)
    def test_matches_scalar_solver(self, spec, A1s, lam):
        kernel = EquilibriumKernel(spec)
        tau, level, trade = kernel.solve(np.array(A1s), lam)
        for k, A1 in enumerate(A1s):
            sol = solve(spec, deviations(TargetPair(50 + 2 * A1, 50)), lam)
            assert trade[k] == sol.trade_occurs
            if sol.trade_occurs:
                assert_allclose(level[k], sol.gamma_tilde_terminal, atol=1e-9)


def test_tau_lands_exactly_on_gamma_jump():
    jump = 0.8937225027686138
    spec = MarketSpec(1.0, 10.0, 0.0, constant(1.0), step([(0.0, 0.0), (jump, 1.0)]))
    d = deviations(TargetPair(4.0, 0.0))
    sol = solve(spec, d, 0.125)
    assert sol.tau == jump
    # no spurious round trip through the post-jump target just before tau
    assert_allclose(sol.turnover(1), 2.0 * sol.gamma_tilde_terminal, rtol=1e-12)
    assert_allclose(sol.gamma_tilde_terminal, ((1 - jump) - 0.125 / 2.0) / (1 - jump), rtol=1e-10)


@given(specs(), st.lists(st.floats(-5, 5), min_size=1, max_size=10), lams)
def test_kernel_tau_matches_scalar(spec, A1s, lam):
    tau, _, _ = EquilibriumKernel(spec).solve(np.array(A1s), lam)
    for k, A1 in enumerate(A1s):
        sol = solve(spec, deviations(TargetPair(50 + 2 * A1, 50)), lam)
        assert abs(tau[k] - sol.tau) <= 1e-9
