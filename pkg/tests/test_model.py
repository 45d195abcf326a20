import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from impacteq.errors import DomainError, MonotonicityError, ParameterError, PositivityError
from impacteq.model import (
    MarketSpec,
    PiecewiseFunction,
    TargetPair,
    constant,
    deviations,
    eval_gamma,
    eval_kappa,
    linear,
    step,
    twap,
    twap_example_spec,
    validate,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def make(**kw):
    base = dict(T=1.0, n=100.0, c1=0.0, kappa=constant(1.0), gamma=twap())
    base.update(kw)
    return MarketSpec(**base)


class TestValidate:
    def test_example_is_valid(self):
        spec = twap_example_spec()
        assert validate(spec) is spec

    def test_c1_boundary_excluded(self):
        with pytest.raises(ParameterError):
            validate(make(c1=-0.5))

    def test_negative_c1_allowed_with_warning(self):
        spec = validate(make(c1=-0.25))
        assert spec.c1_warning is not None

    def test_downward_step_gamma(self):
        with pytest.raises(MonotonicityError):
            validate(make(gamma=step([(0.0, 0.5), (0.5, 0.2)])))

    def test_nonpositive_kappa(self):
        with pytest.raises(PositivityError):
            validate(make(kappa=step([(0.0, 1.0), (0.5, 0.0)])))

    def test_gamma_out_of_range(self):
        with pytest.raises(ParameterError):
            validate(make(gamma=linear([(0.0, 0.0), (1.0, 1.5)])))

    @pytest.mark.parametrize("field,value", [("T", 0.0), ("n", -1.0), ("T", math.inf)])
    def test_nonpositive_scalars(self, field, value):
        with pytest.raises(ParameterError):
            validate(make(**{field: value}))

    def test_all_violations_reported(self):
        with pytest.raises(ParameterError) as info:
            validate(make(T=-1.0, n=0.0, c1=-1.0))
        assert len(info.value.violations) == 3

    def test_gamma_with_positive_start_allowed(self):
        validate(make(gamma=linear([(0.0, 0.2), (1.0, 0.8)])))

    def test_table_must_start_at_zero(self):
        with pytest.raises(ParameterError):
            validate(make(kappa=step([(0.2, 1.0)])))

    def test_horizon_follows_spec(self):
        spec = make(T=2.0, gamma=twap())
        assert spec.gamma(1.0) == 0.5


class TestDeviations:
    def test_example(self):
        d = deviations(TargetPair(52.5, 50.0))
        assert (d.a_sigma, d.A1, d.A2) == (102.5, 1.25, -1.25)

    def test_symmetric(self):
        d = deviations(TargetPair(50.0, 50.0))
        assert d.A1 == 0.0 and d.A2 == 0.0

    def test_lopsided(self):
        d = deviations(TargetPair(0.0, 100.0))
        assert (d.A1, d.A2) == (-50.0, 50.0)

    def test_non_finite(self):
        with pytest.raises(ParameterError):
            deviations(TargetPair(math.nan, 1.0))

    @given(finite, finite, st.floats(1.0, 1e4))
    def test_identities(self, a1, a2, n):
        d = deviations(TargetPair(a1, a2))
        assert d.A1 + d.A2 == 0.0
        assert d.a_sigma == a1 + a2
        assert_allclose(d.a_sigma - n, (a1 - n / 2) + (a2 - n / 2), atol=1e-9 * (1 + abs(a1) + abs(a2) + n))


class TestEvaluation:
    def test_twap_quarter(self):
        assert eval_gamma(twap_example_spec(), 0.25) == 0.25

    def test_step_right_continuous(self):
        spec = make(gamma=step([(0.0, 0.0), (0.5, 1.0)]))
        assert eval_gamma(spec, 0.5) == 1.0
        assert spec.gamma.left(0.5) == 0.0

    def test_constant_kappa(self):
        spec = twap_example_spec()
        assert all(eval_kappa(spec, t) == 1.0 for t in (0.0, 0.3, 1.0))

    def test_linear_interpolation(self):
        f = linear([(0.0, 0.0), (0.5, 0.2), (1.0, 1.0)])
        assert_allclose(f(0.25), 0.1)
        assert_allclose(f(0.75), 0.6)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            eval_gamma(twap_example_spec(), 1.5)
        with pytest.raises(DomainError):
            eval_kappa(twap_example_spec(), -0.1)

    def test_vectorised_matches_scalar(self):
        f = step([(0.0, 0.1), (0.3, 0.4), (0.7, 0.9)])
        ts = np.linspace(0, 1, 101)
        assert_allclose(f.values(ts), [f(t) for t in ts])

    @given(st.lists(st.tuples(st.floats(0.01, 0.99), st.floats(0, 1)), min_size=1, max_size=6, unique_by=lambda r: r[0]))
    def test_valid_gamma_nondecreasing(self, rows):
        times = sorted(r[0] for r in rows)
        vals = sorted(r[1] for r in rows)
        for kind in (step, linear):
            spec = validate(make(gamma=kind([(0.0, 0.0)] + list(zip(times, vals)))))
            ts = np.sort(np.random.default_rng(0).uniform(0, 1, 200))
            g = [eval_gamma(spec, t) for t in ts]
            assert all(b >= a for a, b in zip(g, g[1:]))


class TestSerialisation:
    @pytest.mark.parametrize(
        "fn",
        [twap(), constant(2.5), step([(0.0, 0.1), (0.5, 0.7)]), linear([(0.0, 0.0), (1.0, 1.0)])],
    )
    def test_function_round_trip(self, fn):
        assert PiecewiseFunction.from_dict(fn.to_dict(), fn.horizon) == fn

    def test_spec_round_trip(self):
        spec = twap_example_spec(c1=0.5)
        assert MarketSpec.from_dict(spec.to_dict()) == spec

    def test_aliases(self):
        f = PiecewiseFunction.from_dict({"kind": "piecewise-linear", "table": [[0, 0], [1, 1]]}, 1.0)
        assert f.kind == "linear"
        assert PiecewiseFunction.from_dict(3.0, 1.0) == constant(3.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PiecewiseFunction("spline")
