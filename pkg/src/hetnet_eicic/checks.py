"""Self-checks of the optimisation kernels on frozen inputs (the ``check`` command)."""

from __future__ import annotations

import numpy as np

from . import son
from .son import AbsState, ClusterCounts, PicoRates, StepSchedule


def _fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def _instance(rng):
    n = int(rng.integers(1, 8))
    r_no = rng.uniform(1e6, 50e6, n)
    r_abs = r_no + rng.uniform(0.0, 50e6, n)
    counts = ClusterCounts(rng.uniform(0, 20), rng.uniform(0, 20), tuple(rng.uniform(0, 20, 3)))
    return counts, PicoRates(r_no, r_abs)


def gradient_checks(n=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        counts, rates = _instance(rng)
        th = rng.uniform(0.05, 0.9)
        pairs = [
            (_fd(lambda t: son.utility_pf1(t, counts), th), son.d_utility_pf1(th, counts)),
            (_fd(lambda t: son.utility_pf2_exact(t, counts, rates), th), son.d_utility_pf2_exact(th, rates, counts)),
            (_fd(lambda t: son.utility_pf2(t, counts), th), son.d_utility_pf2(th, counts.n_small, counts.sum_macro)),
        ]
        for num, ana in pairs:
            worst = max(worst, abs(num - ana) / max(abs(ana), 1.0))
    return worst < 1e-6, f"max relative error {worst:.2e}"


def fixed_point_checks():
    sched = StepSchedule("harmonic", 0.05, 200.0)
    counts = ClusterCounts(2.0, 3.0, (5.0,))
    st = AbsState(0.7)
    for _ in range(10_000):
        st = son.absr_pf1_update(st, counts, sched)
    e1 = abs(st.theta - 0.2)
    counts2 = ClusterCounts(4.0, 0.0, (6.0,))
    st = AbsState(0.7)
    for _ in range(10_000):
        st = son.absr_pf2_update(st, counts2, sched)
    e2 = abs(st.theta - 0.2)
    rates = PicoRates(np.array([2e6, 5e6, 1e6]), np.array([20e6, 9e6, 30e6]))
    counts3 = ClusterCounts(0.0, 3.0, (1.0, 0.5, 1.5))
    target = son.absr_pf2_exact_optimal(rates, counts3)
    st = AbsState(0.5)
    for _ in range(10_000):
        st = son.absr_pf2_exact_update(st, rates, counts3, sched)
    e3 = abs(st.theta - target)
    worst = max(e1, e2, e3)
    return worst < 1e-3, f"errors {e1:.1e} {e2:.1e} {e3:.1e}"


def jensen_checks(n=100, seed=1):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n):
        counts, rates = _instance(rng)
        for th in np.linspace(0.02, 0.98, 50):
            lo, hi = son.jensen_bound_check(th, rates, counts)
            worst = max(worst, lo - hi)
    return worst <= 1e-9, f"max(U_approx - U_exact) {worst:.2e}"


def run_all():
    return [("gradients", *gradient_checks()), ("fixed points", *fixed_point_checks()), ("lower bound", *jensen_checks())]
