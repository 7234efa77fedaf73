"""Self-optimisation kernels: load-balancing offsets and ABS-ratio updates.

All functions are pure. The ABS-ratio updates are projected stochastic
approximation steps on concave proportional-fair utilities; each has a
closed-form (or bisection) optimum used as an oracle and as the
per-event "optimal" controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

THETA_MIN = 0.01
THETA_MAX = 0.95
CIO_MAX_DB = 12.0


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``eps_k``: constant, or harmonic ``eps0 / (1 + k/tau)``."""

    kind: str = "harmonic"
    eps0: float = 0.05
    tau: float = 200.0

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic"):
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        if not self.eps0 > 0:
            raise ScheduleError("eps0 must be positive")
        if not self.tau > 0:
            raise ScheduleError("tau must be positive")

    def step(self, k: int) -> float:
        if self.kind == "constant":
            return self.eps0
        return self.eps0 / (1.0 + k / self.tau)

    @property
    def non_summable(self) -> bool:
        return True  # both kinds diverge: constant trivially, harmonic like the harmonic series

    @property
    def square_summable(self) -> bool:
        return self.kind == "harmonic"

    @property
    def converges(self) -> bool:
        """Whether the schedule meets the decreasing-step SA conditions."""
        return self.non_summable and self.square_summable


def require_convergent(schedule: StepSchedule) -> None:
    if not schedule.converges:
        raise ScheduleError(f"{schedule.kind} step schedule is not square-summable")


@dataclass(frozen=True)
class AbsState:
    theta: float
    k: int = 0
    cluster: tuple[int, ...] = ()
    theta_min: float = THETA_MIN
    theta_max: float = THETA_MAX

    def __post_init__(self):
        if not self.theta_min <= self.theta <= self.theta_max:
            raise ValueError(f"theta {self.theta} outside [{self.theta_min}, {self.theta_max}]")


@dataclass(frozen=True)
class CioState:
    cio_db: float = 0.0
    cio_max: float = CIO_MAX_DB

    def __post_init__(self):
        if not 0.0 <= self.cio_db <= self.cio_max:
            raise ValueError(f"cio {self.cio_db} dB outside [0, {self.cio_max}]")


@dataclass(frozen=True)
class ClusterCounts:
    """Mean active-user counts seen by one small cell's ABS optimiser.

    ``n_macro`` holds one entry per cluster macro.
    """

    n_cre: float = 0.0
    n_cen: float = 0.0
    n_macro: tuple[float, ...] = ()

    @property
    def n_small(self) -> float:
        return self.n_cre + self.n_cen

    @property
    def sum_macro(self) -> float:
        return float(sum(self.n_macro))


@dataclass(frozen=True)
class PicoRates:
    """Full-cell rates of the small cell's users outside and during blank subframes."""

    r_no_abs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    r_abs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        no = np.asarray(self.r_no_abs, dtype=float)
        ab = np.asarray(self.r_abs, dtype=float)
        if no.shape != ab.shape:
            raise ValueError("r_no_abs and r_abs must have the same length")
        if np.any(no < 0):
            raise ValueError("rates must be non-negative")
        if np.any(ab < no):
            raise ValueError("r_abs must not be below r_no_abs")
        object.__setattr__(self, "r_no_abs", no)
        object.__setattr__(self, "r_abs", ab)

    def __len__(self):
        return len(self.r_no_abs)


def _project(x, lo, hi):
    return min(max(x, lo), hi)


def _check_theta(theta):
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")


# -- load balancing ---------------------------------------------------------

def lb_update(cio: CioState, rho_m_hat: float, rho_s_hat: float, eps: float) -> CioState:
    """One projected step of ``CIO += eps (rho_macro - rho_small)``."""
    new = _project(cio.cio_db + eps * (rho_m_hat - rho_s_hat), 0.0, cio.cio_max)
    return replace(cio, cio_db=new)


# -- PF1: only range-extended users use blank subframes ---------------------

def utility_pf1(theta, counts: ClusterCounts, const: float = 0.0) -> float:
    """Proportional-fair utility with protected range-extended users.

    The log-rate terms do not depend on theta and are folded into ``const``.
    """
    _check_theta(theta)
    return ((counts.sum_macro + counts.n_cen) * math.log(1 - theta)
            + counts.n_cre * math.log(theta) + const)


def d_utility_pf1(theta, counts: ClusterCounts) -> float:
    _check_theta(theta)
    return counts.n_cre / theta - (counts.n_cen + counts.sum_macro) / (1 - theta)


def pf1_constant(macro_rates=(), center_rates=(), cre_abs_rates=()) -> float:
    """Theta-independent part of the PF1 utility from per-user mean rates."""
    return float(np.sum(np.log(macro_rates)) + np.sum(np.log(center_rates)) + np.sum(np.log(cre_abs_rates)))


def absr_pf1_optimal(counts: ClusterCounts, theta_min=THETA_MIN, theta_max=THETA_MAX) -> tuple[float, bool]:
    """Closed-form PF1 optimum, projected. Second value flags all-zero counts."""
    total = counts.n_cre + counts.n_cen + counts.sum_macro
    if total <= 0:
        return theta_min, True
    return _project(counts.n_cre / total, theta_min, theta_max), False


def _sa_step(state: AbsState, drift: float, schedule: StepSchedule) -> AbsState:
    eps = schedule.step(state.k)
    theta = _project(state.theta + eps * drift, state.theta_min, state.theta_max)
    return replace(state, theta=theta, k=state.k + 1)


def absr_pf1_update(state: AbsState, counts: ClusterCounts, schedule: StepSchedule) -> AbsState:
    require_convergent(schedule)
    return _sa_step(state, d_utility_pf1(state.theta, counts), schedule)


# -- PF2 exact: all small-cell users share both phases ----------------------

def utility_pf2_exact(theta, counts: ClusterCounts, rates: PicoRates, const: float = 0.0) -> float:
    """``sum_m N_m log(1-theta) + sum_u log((1-theta) r_no + theta r_abs) + const``."""
    _check_theta(theta)
    mix = (1 - theta) * rates.r_no_abs + theta * rates.r_abs
    return counts.sum_macro * math.log(1 - theta) + float(np.sum(np.log(mix))) + const


def d_utility_pf2_exact(theta, rates: PicoRates, counts: ClusterCounts) -> float:
    _check_theta(theta)
    diff = rates.r_abs - rates.r_no_abs
    gaining = diff > 0
    # each gaining user contributes 1 / (theta + r_no / (r_abs - r_no))
    terms = 1.0 / (theta + rates.r_no_abs[gaining] / diff[gaining])
    return float(np.sum(terms)) - counts.sum_macro / (1 - theta)


def absr_pf2_exact_update(state: AbsState, rates: PicoRates, counts: ClusterCounts,
                          schedule: StepSchedule) -> AbsState:
    require_convergent(schedule)
    return _sa_step(state, d_utility_pf2_exact(state.theta, rates, counts), schedule)


def absr_pf2_exact_optimal(rates: PicoRates, counts: ClusterCounts, theta_min=THETA_MIN,
                           theta_max=THETA_MAX, tol=1e-12) -> float:
    """Projected maximiser of the exact utility by bisection on its derivative."""
    lo, hi = theta_min, theta_max
    if d_utility_pf2_exact(lo, rates, counts) <= 0:
        return lo
    if d_utility_pf2_exact(hi, rates, counts) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if d_utility_pf2_exact(mid, rates, counts) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- PF2 approximate: Jensen lower bound ------------------------------------

def utility_pf2(theta, counts: ClusterCounts, rates: PicoRates | None = None, const: float = 0.0) -> float:
    """Lower bound of the exact utility, splitting each user's log evenly over both phases.

    With per-user ``rates`` the full bound is returned; without them the
    small-cell count ``counts.n_small`` stands in and the log-rate
    constant is taken as ``const``.
    """
    _check_theta(theta)
    macro = counts.sum_macro * math.log(1 - theta)
    if rates is None:
        n = counts.n_small
        return macro + 0.5 * n * (math.log(1 - theta) + math.log(theta)) + const
    with np.errstate(divide="ignore"):
        per_user = 0.5 * np.log(2 * (1 - theta) * rates.r_no_abs) + 0.5 * np.log(2 * theta * rates.r_abs)
    return macro + float(np.sum(per_user)) + const


def d_utility_pf2(theta, n_small: float, sum_macro: float) -> float:
    _check_theta(theta)
    return n_small / (2 * theta) - (n_small / 2 + sum_macro) / (1 - theta)


def absr_pf2_optimal(n_small: float, sum_macro: float, theta_min=THETA_MIN, theta_max=THETA_MAX) -> float:
    total = n_small + sum_macro
    if total <= 0:
        return theta_min
    return _project(n_small / (2 * total), theta_min, theta_max)


def absr_pf2_update(state: AbsState, counts: ClusterCounts, schedule: StepSchedule) -> AbsState:
    require_convergent(schedule)
    return _sa_step(state, d_utility_pf2(state.theta, counts.n_small, counts.sum_macro), schedule)


def jensen_bound_check(theta, rates: PicoRates, counts: ClusterCounts) -> tuple[float, float]:
    """Both PF2 utilities on identical inputs; the first never exceeds the second."""
    return utility_pf2(theta, counts, rates), utility_pf2_exact(theta, counts, rates)


# -- macro side ---------------------------------------------------------------

def macro_absr_aggregate(requests: Sequence[float]) -> float:
    """A macro mutes the largest fraction any of its small cells asks for."""
    return max(requests) if len(requests) else 0.0

