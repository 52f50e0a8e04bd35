import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpsq.errors import (
    ConfigError,
    DivergenceError,
    MonotonicityError,
    ParameterError,
)
from lpsq.moduli import (
    ModulusOfContinuity,
    dini_constant,
    dini_inequality_suite,
    dini_integral,
    log_dini_integral,
    log_modulus,
    logsplit_moduli,
    parse_modulus,
    power_modulus,
    table_modulus,
)

from conftest import exp_substituted_quad


class TestDiniConstant:
    def test_linear_modulus(self):
        assert dini_constant(power_modulus(1.0), 1e-8) == pytest.approx(2.0, abs=1e-8)

    def test_sqrt_modulus(self):
        assert dini_constant(power_modulus(0.5), 1e-8) == pytest.approx(3.0, abs=1e-8)

    @pytest.mark.parametrize("delta", [1.0, 0.5, 0.25, 0.1])
    def test_power_closed_form(self, delta):
        got = dini_constant(power_modulus(delta), 1e-8)
        assert got == pytest.approx(1.0 / delta + 1.0, abs=1e-7)

    def test_example1_modulus_matches_quad_oracle(self):
        # oracle: scipy quad with exponential tail substitution
        w = log_modulus(3.0)
        f = lambda u: float(w.at_exp(u))
        oracle = exp_substituted_quad(f) + float(w(1.0))
        got = dini_constant(w, 1e-8)
        assert got == pytest.approx(oracle, abs=1e-6)

    def test_example1_modulus_kappa4(self):
        w = log_modulus(4.0)
        oracle = exp_substituted_quad(lambda u: float(w.at_exp(u))) + float(w(1.0))
        assert dini_constant(w, 1e-8) == pytest.approx(oracle, abs=1e-6)

    def test_constant_modulus_diverges(self):
        w = ModulusOfContinuity("const", lambda t: np.ones_like(np.asarray(t)))
        with pytest.raises(DivergenceError) as exc:
            dini_constant(w, 1e-8)
        assert exc.value.partial is not None

    def test_non_monotone_rejected(self):
        w = ModulusOfContinuity("bad", lambda t: 1.0 - t)
        with pytest.raises(MonotonicityError):
            dini_constant(w, 1e-8)

    def test_bad_tol(self):
        with pytest.raises(ParameterError):
            dini_constant(power_modulus(1.0), 0.0)

    def test_monotone_in_modulus(self):
        # w1 <= w2 pointwise => dini(w1) <= dini(w2) + 2 tol
        d1 = dini_constant(power_modulus(1.0), 1e-8)
        d2 = dini_constant(power_modulus(0.5), 1e-8)
        assert d1 <= d2 + 2e-8  # t <= sqrt(t) on (0,1]


class TestLogDini:
    def test_kappa3_grows_without_bound(self):
        # the log-weighted integral at kappa=3: finite Dini but log-Dini fails
        res = log_dini_integral(log_modulus(3.0), 1e-8, max_doublings=24)
        assert res.diverged or not res.converged
        lv = res.levels
        assert len(lv) >= 3
        assert lv[-1] / lv[-3] >= 1.8  # keeps growing over two doublings

    def test_kappa3_plain_dini_still_finite(self):
        res = dini_integral(log_modulus(3.0), 1e-8)
        assert res.converged and not res.diverged


class TestExtensionConvention:
    def test_constant_past_one(self):
        w = log_modulus(3.0)
        assert w(1.0) == pytest.approx(w(7.3))
        assert w(1.0) == pytest.approx(float(w(np.array([2.0, 100.0]))[1]))

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            power_modulus(0.5)(0.0)

    @given(st.floats(min_value=1e-9, max_value=1.0),
           st.floats(min_value=1e-9, max_value=1.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_samples(self, t1, t2):
        w = log_modulus(3.0)
        lo, hi = min(t1, t2), max(t1, t2)
        assert w(lo) <= w(hi) + 1e-15


class TestSuite:
    def test_item_c_linear_alpha1(self):
        rep = dini_inequality_suite(power_modulus(1.0), alpha=1.0)
        assert rep["c"].lhs == pytest.approx(1.0, abs=1e-9)

    def test_item_d_linear_alpha_e(self):
        rep = dini_inequality_suite(power_modulus(1.0), alpha=math.e)
        assert rep["d"].lhs == pytest.approx(2.0, abs=1e-7)

    def test_item_e_linear_m2(self):
        rep = dini_inequality_suite(power_modulus(1.0), alpha=1.0, m_shift=2)
        assert rep["e"].lhs == pytest.approx(2.0, abs=1e-7)
        assert rep["e"].reference == pytest.approx(9.0, abs=1e-6)
        assert rep["e"].lhs <= rep["e"].reference

    def test_item_a_linear_closed_form(self):
        # int_0^{1/3} 16t/(1+t)^4 dt + int_{1/3}^inf dt/(t(1+t)^2) = log 4 - 1/3
        rep = dini_inequality_suite(power_modulus(1.0), alpha=1.0, n=1)
        assert rep["a"].lhs == pytest.approx(math.sqrt(math.log(4.0) - 1.0 / 3.0),
                                             abs=1e-6)

    def test_item_b_linear_closed_form(self):
        # alpha=1: 4 int_0^{1/2} t/(1+t)^2 dt + int_{1/2}^inf dt/(t(1+t)^2)
        ref = 4.0 * (math.log(1.5) + 2.0 / 3.0 - 1.0) + (math.log(3.0) - 2.0 / 3.0)
        rep = dini_inequality_suite(power_modulus(1.0), alpha=1.0, n=1)
        assert rep["b"].lhs == pytest.approx(ref, abs=1e-6)

    @pytest.mark.parametrize("m", [2, 3])
    def test_item_e_inequality_all_moduli(self, m):
        for w in (power_modulus(1.0), power_modulus(0.5), log_modulus(3.0)):
            rep = dini_inequality_suite(w, alpha=2.0, m_shift=m)
            assert rep["e"].lhs <= rep["e"].reference * (1 + 1e-9)

    def test_all_ratios_finite(self):
        for w in (power_modulus(0.5), log_modulus(3.0)):
            rep = dini_inequality_suite(w, alpha=4.0, n=1)
            for item in rep.values():
                assert math.isfinite(item.ratio)

    def test_ring_and_far_ring_scale_invariant(self):
        r1 = dini_inequality_suite(power_modulus(0.5), alpha=2.0, ell=1.0)
        r2 = dini_inequality_suite(power_modulus(0.5), alpha=2.0, ell=16.0)
        assert r1["ring_sum"].lhs == pytest.approx(r2["ring_sum"].lhs, rel=1e-9)
        assert r1["far_ring"].lhs == pytest.approx(r2["far_ring"].lhs, rel=1e-9)

    def test_far_ring_linear_closed_form(self):
        # n=1: 2 int_0^{1/16} w(s)/s ds = 2/16 for w = t
        rep = dini_inequality_suite(power_modulus(1.0), alpha=1.0, n=1)
        assert rep["far_ring"].lhs == pytest.approx(0.125, abs=1e-8)

    def test_n2_runs(self):
        rep = dini_inequality_suite(power_modulus(1.0), alpha=2.0, n=2)
        assert all(math.isfinite(i.ratio) for i in rep.values())

    def test_bad_alpha(self):
        with pytest.raises(ParameterError):
            dini_inequality_suite(power_modulus(1.0), alpha=0.5)


class TestParse:
    def test_power_id(self):
        assert dini_constant(parse_modulus("power:0.5")) == pytest.approx(3.0, abs=1e-7)

    def test_log_id(self):
        w = parse_modulus("log:3")
        assert w.name == "log:3"

    def test_logsplit_pair(self):
        w = parse_modulus("logsplit:3,1.4")
        phi = parse_modulus("logsplit-phi:3,1.4")
        # w has the smaller decay exponent kappa-beta=1.6 vs beta=1.4
        assert float(w(0.01)) < float(phi(0.01))

    def test_logsplit_constraints(self):
        with pytest.raises(ParameterError):
            logsplit_moduli(3.0, 0.9)  # beta <= 1
        with pytest.raises(ParameterError):
            logsplit_moduli(2.2, 1.5)  # kappa - beta <= 1
        with pytest.raises(ConfigError):
            parse_modulus("logsplit:2.2,1.5")

    def test_unknown_id(self):
        with pytest.raises(ConfigError):
            parse_modulus("nope:1")

    def test_csv_modulus(self, tmp_path):
        path = tmp_path / "w.csv"
        ts = np.geomspace(1e-4, 1.0, 64)
        path.write_text("\n".join(f"{t},{t**0.5}" for t in ts))
        w = table_modulus(str(path))
        assert float(w(0.25)) == pytest.approx(0.5, rel=1e-3)
        # flat below the table floor: not Dini
        with pytest.raises(DivergenceError):
            dini_constant(w)
