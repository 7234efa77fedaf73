import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetnet_eicic.checks import fixed_point_checks, gradient_checks, jensen_checks, run_all
from hetnet_eicic.son import (
    THETA_MAX, THETA_MIN, AbsState, CioState, ClusterCounts, PicoRates, ScheduleError, StepSchedule,
    absr_pf1_optimal, absr_pf1_update, absr_pf2_exact_optimal, absr_pf2_exact_update, absr_pf2_optimal,
    absr_pf2_update, d_utility_pf1, d_utility_pf2, d_utility_pf2_exact, jensen_bound_check, lb_update,
    macro_absr_aggregate, utility_pf1, utility_pf2, utility_pf2_exact,
)

HARMONIC = StepSchedule("harmonic", 0.05, 200)
counts_st = st.floats(0.0, 20.0)
theta_st = st.floats(0.05, 0.9)


def iterate(update, state, n=10_000):
    for _ in range(n):
        state = update(state)
    return state


def central_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def rates_st(min_size=0):
    pair = st.tuples(st.floats(1e6, 100e6), st.floats(1e5, 99e6))
    return st.lists(pair, min_size=min_size, max_size=8).map(
        lambda ps: PicoRates(np.array([p[0] for p in ps]), np.array([p[0] + p[1] for p in ps])))


# drift large enough for 1e4 harmonic steps to reach the optimum
well_conditioned_rates = st.lists(st.tuples(st.floats(1e6, 50e6), st.floats(0.1, 10.0)), min_size=1, max_size=8).map(
    lambda ps: PicoRates(np.array([p[0] for p in ps]), np.array([p[0] * (1 + p[1]) for p in ps])))


class TestSchedule:
    def test_harmonic_decays(self):
        s = StepSchedule("harmonic", 0.05, 200)
        assert s.step(0) == 0.05
        assert s.step(200) == pytest.approx(0.025)
        assert s.converges

    def test_constant_does_not_meet_sa_conditions(self):
        s = StepSchedule("constant", 0.3, 1)
        assert s.step(10_000) == 0.3
        assert s.non_summable and not s.square_summable

    @pytest.mark.parametrize("kw", [dict(eps0=0), dict(tau=-1), dict(kind="cosine")])
    def test_invalid(self, kw):
        with pytest.raises(ScheduleError):
            StepSchedule(**kw)

    @pytest.mark.parametrize("update", [
        lambda st_, sch: absr_pf1_update(st_, ClusterCounts(1, 1, (1,)), sch),
        lambda st_, sch: absr_pf2_update(st_, ClusterCounts(1, 1, (1,)), sch),
        lambda st_, sch: absr_pf2_exact_update(st_, PicoRates([1.0], [2.0]), ClusterCounts(0, 0, (1,)), sch),
    ])
    def test_constant_rejected_by_abs_updates(self, update):
        with pytest.raises(ScheduleError):
            update(AbsState(0.5), StepSchedule("constant", 0.1, 1))


class TestStates:
    def test_theta_bounds(self):
        with pytest.raises(ValueError):
            AbsState(0.99)

    def test_cio_bounds(self):
        with pytest.raises(ValueError):
            CioState(13.0)

    def test_rates_must_gain_from_muting(self):
        with pytest.raises(ValueError):
            PicoRates([2.0], [1.0])


class TestLoadBalancing:
    def test_example(self):
        assert lb_update(CioState(3.0), 0.8, 0.5, 0.1).cio_db == pytest.approx(3.03)

    def test_equal_loads_unchanged(self):
        assert lb_update(CioState(3.0), 0.6, 0.6, 0.1).cio_db == 3.0

    def test_projection(self):
        assert lb_update(CioState(12.0), 1.0, 0.0, 5.0).cio_db == 12.0
        assert lb_update(CioState(0.5), 0.0, 1.0, 5.0).cio_db == 0.0

    def test_two_cell_fluid_balances(self):
        # macro load falls and small load rises with the offset; they cross at 6 dB
        def loads(c):
            return 0.9 - 0.05 * c, 0.3 + 0.05 * c
        cio = CioState(0.0)
        for _ in range(5000):
            cio = lb_update(cio, *loads(cio.cio_db), 0.3)
        rm, rs = loads(cio.cio_db)
        assert abs(rm - rs) < 1e-3
        assert cio.cio_db == pytest.approx(6.0, abs=0.02)


class TestPf1:
    C = ClusterCounts(n_cre=2, n_cen=3, n_macro=(5,))

    def test_derivative_zero_at_example(self):
        assert d_utility_pf1(0.2, self.C) == pytest.approx(0.0, abs=1e-12)

    def test_no_cre_users_pushes_down(self):
        c = ClusterCounts(0, 3, (2,))
        assert all(d_utility_pf1(t, c) < 0 for t in np.linspace(0.01, 0.99, 50))

    def test_domain(self):
        with pytest.raises(ValueError):
            d_utility_pf1(1.0, self.C)
        with pytest.raises(ValueError):
            utility_pf1(0.0, self.C)

    def test_optimum_examples(self):
        assert absr_pf1_optimal(self.C) == (pytest.approx(0.2), False)
        assert absr_pf1_optimal(ClusterCounts(4, 0, ()))[0] == THETA_MAX
        assert absr_pf1_optimal(ClusterCounts(4, 1, (3,)))[0] == pytest.approx(0.5)
        assert absr_pf1_optimal(ClusterCounts()) == (THETA_MIN, True)

    @pytest.mark.parametrize("theta0", [0.01, 0.5, 0.95])
    def test_update_converges(self, theta0):
        s = iterate(lambda s: absr_pf1_update(s, self.C, HARMONIC), AbsState(theta0))
        assert s.theta == pytest.approx(0.2, abs=1e-3)
        assert s.k == 10_000

    def test_stationary_point_is_fixed(self):
        s = absr_pf1_update(AbsState(0.2), self.C, HARMONIC)
        assert s.theta == pytest.approx(0.2, abs=1e-12)

    def test_projection_below(self):
        s = absr_pf1_update(AbsState(0.02), ClusterCounts(0, 5, (20,)), StepSchedule("harmonic", 1.0, 1))
        assert s.theta == THETA_MIN

    @given(counts_st, counts_st, counts_st)
    def test_stationary_point_matches_closed_form(self, a, b, c):
        counts = ClusterCounts(a, b, (c,))
        opt, _ = absr_pf1_optimal(counts)
        if a > 0 and THETA_MIN < opt < THETA_MAX:
            assert d_utility_pf1(opt, counts) == pytest.approx(0.0, abs=1e-9 * (a + b + c) / opt)


class TestPf2Exact:
    def test_one_flow_converges_to_floor(self):
        rates = PicoRates([1e6], [2e6])
        counts = ClusterCounts(0, 0, (1,))
        assert d_utility_pf2_exact(0.3, rates, counts) < 0
        s = iterate(lambda s: absr_pf2_exact_update(s, rates, counts, HARMONIC), AbsState(0.5), 2000)
        assert s.theta == THETA_MIN

    def test_no_flows_drift_negative(self):
        rates = PicoRates()
        counts = ClusterCounts(0, 0, (2,))
        assert d_utility_pf2_exact(0.4, rates, counts) < 0
        assert absr_pf2_exact_optimal(rates, counts) == THETA_MIN

    def test_flat_flow_contributes_nothing(self):
        counts = ClusterCounts(0, 0, (2,))
        base = d_utility_pf2_exact(0.4, PicoRates([1.0], [3.0]), counts)
        with_flat = d_utility_pf2_exact(0.4, PicoRates([1.0, 5.0], [3.0, 5.0]), counts)
        assert with_flat == base

    @given(st.integers(0, 10), counts_st, theta_st)
    def test_reduces_to_pf1_without_base_rate(self, n, macro, theta):
        rates = PicoRates(np.zeros(n), np.full(n, 7e6))
        counts = ClusterCounts(n_cre=n, n_cen=0, n_macro=(macro,))
        assert d_utility_pf2_exact(theta, rates, counts) == pytest.approx(d_utility_pf1(theta, counts), rel=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(well_conditioned_rates, st.floats(0.5, 20.0), st.floats(0.05, 0.9))
    def test_update_converges_to_bisection_root(self, rates, macro, theta0):
        counts = ClusterCounts(0, 0, (macro,))
        target = absr_pf2_exact_optimal(rates, counts)
        s = iterate(lambda s: absr_pf2_exact_update(s, rates, counts, HARMONIC), AbsState(theta0))
        assert s.theta == pytest.approx(target, abs=1e-3)


class TestPf2:
    def test_example_root(self):
        assert d_utility_pf2(0.2, 4, 6) == pytest.approx(0.0, abs=1e-12)
        assert absr_pf2_optimal(4, 6) == pytest.approx(0.2)

    def test_no_macro_users_split_evenly(self):
        assert absr_pf2_optimal(3, 0) == pytest.approx(0.5)

    def test_update_converges(self):
        c = ClusterCounts(n_cre=1, n_cen=3, n_macro=(6,))
        s = iterate(lambda s: absr_pf2_update(s, c, HARMONIC), AbsState(0.7))
        assert s.theta == pytest.approx(0.2, abs=1e-3)

    def test_no_small_users_goes_to_floor(self):
        c = ClusterCounts(0, 0, (4,))
        s = iterate(lambda s: absr_pf2_update(s, c, HARMONIC), AbsState(0.7), 3000)
        assert s.theta == THETA_MIN

    def test_deterministic(self):
        c = ClusterCounts(2, 2, (6,))
        a = iterate(lambda s: absr_pf2_update(s, c, HARMONIC), AbsState(0.7), 100)
        b = iterate(lambda s: absr_pf2_update(s, c, HARMONIC), AbsState(0.7), 100)
        assert a == b


class TestUtilityProperties:
    @given(counts_st, counts_st, counts_st, theta_st)
    def test_pf1_gradient(self, a, b, c, theta):
        counts = ClusterCounts(a, b, (c,))
        fd = central_difference(lambda t: utility_pf1(t, counts), theta)
        assert d_utility_pf1(theta, counts) == pytest.approx(fd, rel=1e-6, abs=1e-6)

    @given(rates_st(), counts_st, theta_st)
    def test_pf2_exact_gradient(self, rates, macro, theta):
        counts = ClusterCounts(0, 0, (macro,))
        fd = central_difference(lambda t: utility_pf2_exact(t, counts, rates), theta)
        assert d_utility_pf2_exact(theta, rates, counts) == pytest.approx(fd, rel=1e-6, abs=1e-6)

    @given(counts_st, counts_st, theta_st)
    def test_pf2_gradient(self, n_small, macro, theta):
        counts = ClusterCounts(n_small, 0, (macro,))
        fd = central_difference(lambda t: utility_pf2(t, counts), theta)
        assert d_utility_pf2(theta, n_small, macro) == pytest.approx(fd, rel=1e-6, abs=1e-6)

    @given(counts_st, counts_st, counts_st, rates_st(min_size=1))
    def test_derivatives_decrease(self, a, b, c, rates):
        grid = np.linspace(THETA_MIN, THETA_MAX, 40)
        counts = ClusterCounts(a, b, (c,))
        d1 = [d_utility_pf1(t, counts) for t in grid]
        d2 = [d_utility_pf2(t, counts.n_small, c) for t in grid]
        d3 = [d_utility_pf2_exact(t, rates, counts) for t in grid]
        for d, total in ((d1, a + b + c), (d2, a + b + c), (d3, len(rates) + c)):
            if total > 0:
                assert np.all(np.diff(d) < 0)

    @given(rates_st(min_size=1), counts_st, st.floats(0.01, 0.99))
    def test_jensen_lower_bound(self, rates, macro, theta):
        lo, hi = jensen_bound_check(theta, rates, ClusterCounts(0, 0, (macro,)))
        assert lo <= hi + 1e-9 * max(1.0, abs(hi))

    @given(st.lists(st.floats(1e5, 1e8), min_size=1, max_size=6), st.floats(0.05, 0.5))
    def test_jensen_equality_when_phases_match(self, r_abs, theta):
        # equal phase shares need r_no >= r_abs unless theta <= 1/2
        r_abs = np.array(r_abs)
        rates = PicoRates(theta * r_abs / (1 - theta), r_abs)
        lo, hi = jensen_bound_check(theta, rates, ClusterCounts(0, 0, (3,)))
        assert lo == pytest.approx(hi, abs=1e-9)

    def test_jensen_bound_diverges_near_zero(self):
        rates = PicoRates([1e6], [2e6])
        lo, hi = jensen_bound_check(1e-300, rates, ClusterCounts(0, 0, (1,)))
        assert lo < -300 and math.isfinite(hi)


class TestAggregate:
    @pytest.mark.parametrize("req,out", [([0.1, 0.3, 0.2], 0.3), ([], 0.0), ([0.25], 0.25)])
    def test_examples(self, req, out):
        assert macro_absr_aggregate(req) == out


class TestBuiltinChecks:
    @pytest.mark.parametrize("check", [gradient_checks, fixed_point_checks, jensen_checks])
    def test_passes(self, check):
        ok, detail = check()
        assert ok, detail

    def test_run_all_names(self):
        assert [name for name, *_ in run_all()] == ["gradients", "fixed points", "lower bound"]
