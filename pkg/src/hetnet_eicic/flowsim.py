"""Event-driven flow-level simulation of the eICIC cluster.

Flows are elastic downloads served by equal-share processor sharing. A
flow's peak rates are fixed at arrival from its position (full-buffer
interference, deterministic pathloss); the time-share structure imposed by
blank subframes then scales them per cell. Estimators are exponentially
weighted and updated exactly at every event, since all tracked quantities
are piecewise constant between events.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import son
from .layout import CellKind, NetworkLayout, attach_scores
from .son import AbsState, CioState, ClusterCounts, PicoRates, StepSchedule
from .traffic import ArrivalProcess, ServiceArea, TrafficConfig

SPECTRAL_EFFICIENCY_CAP = 6.0  # bit/s/Hz


class ImplMode(str, Enum):
    PROTECTED = "protected"  # range-extended users only in blank subframes
    SHARED = "shared"  # every small-cell user in both phases


class AbsAlgorithm(str, Enum):
    PF1 = "pf1"
    PF2_EXACT = "pf2_exact"
    PF2 = "pf2"


class OverloadError(RuntimeError):
    pass


class StarvationWarning(RuntimeWarning):
    """Range-extended users in protected mode with the blank fraction at its floor."""


def link_rate(sinr, bandwidth):
    """Shannon rate truncated at 6 bit/s/Hz."""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr <= 0):
        raise ValueError("sinr must be positive")
    rate = np.minimum(bandwidth * np.log2(1.0 + sinr), bandwidth * SPECTRAL_EFFICIENCY_CAP)
    return float(rate) if rate.ndim == 0 else rate


@dataclass
class Flow:
    id: int
    position: tuple[float, float]
    size: float
    arrival_time: float
    serving_cell: int
    is_cre: bool
    r_base: float  # macro rate, or small-cell rate outside blank subframes
    r_abs: float  # small-cell rate during blank subframes (= r_base for macros)
    hotspot: bool = False
    size_remaining: float = 0.0
    rate: float = 0.0
    downloaded: float = 0.0
    # link terms for recomputing r_base / r_abs when the set of transmitting cells changes
    signal_mw: float = field(default=0.0, repr=False)
    rx_sim_mw: np.ndarray | None = field(default=None, repr=False)  # simulated cells, own entry zeroed
    floor_mw: float = field(default=0.0, repr=False)  # always-on cells plus noise
    floor_abs_mw: float = field(default=0.0, repr=False)
    abs_keep: np.ndarray | None = field(default=None, repr=False)  # per simulated cell, 1 or residual

    def __post_init__(self):
        if not self.size_remaining:
            self.size_remaining = self.size


@dataclass
class CellCounters:
    n_active: int = 0
    n_mean: float = 0.0
    n_mean_cre: float = 0.0
    n_mean_center: float = 0.0
    rho_hat: float = 0.0
    demand_hat: float = 0.0


@dataclass
class CellState:
    id: int
    kind: CellKind
    cio: float = 0.0
    theta: float = 0.0  # requested (small) or applied (macro) blank fraction
    flows: dict = field(default_factory=dict)
    counters: CellCounters = field(default_factory=CellCounters)
    cluster: tuple[int, ...] = ()
    parent: int | None = None
    abs_state: AbsState | None = None
    busy_time: float = 0.0

    @property
    def n_cre(self) -> int:
        return sum(1 for f in self.flows.values() if f.is_cre)

    @property
    def n_center(self) -> int:
        return len(self.flows) - self.n_cre


def flow_throughput(flow: Flow, cell: CellState, theta: float, impl_mode: ImplMode) -> float:
    """Processor-sharing rate of ``flow`` in ``cell`` under blank fraction ``theta``."""
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    if cell.kind is CellKind.MACRO:
        return (1.0 - theta) * flow.r_base / max(len(cell.flows), 1)
    if ImplMode(impl_mode) is ImplMode.PROTECTED:
        if flow.is_cre:
            return theta * flow.r_abs / max(cell.n_cre, 1)
        return (1.0 - theta) * flow.r_base / max(cell.n_center, 1)
    return ((1.0 - theta) * flow.r_base + theta * flow.r_abs) / max(len(cell.flows), 1)


def ewma_weight(dt: float, half_life: float) -> float:
    """Weight kept by the old estimate after ``dt`` seconds."""
    return math.exp(-dt * math.log(2.0) / half_life)


def update_estimators(cell: CellState, dt: float, half_life: float = 30.0) -> CellCounters:
    """Advance the cell's exponentially weighted estimators over ``dt``.

    The instantaneous counts are held constant over the interval, so the
    update is exact for piecewise-constant signals.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = cell.counters
    w = ewma_weight(dt, half_life)
    n = len(cell.flows)
    n_cre = cell.n_cre if cell.kind is CellKind.SMALL else 0
    c.n_active = n
    c.n_mean = w * c.n_mean + (1 - w) * n
    c.n_mean_cre = w * c.n_mean_cre + (1 - w) * n_cre
    c.n_mean_center = w * c.n_mean_center + (1 - w) * (n - n_cre)
    c.rho_hat = w * c.rho_hat + (1 - w) * (1.0 if n > 0 else 0.0)
    c.demand_hat = w * c.demand_hat
    return c


def cluster_throughput_condition(cells, theta) -> bool:
    """Whether blank subframes do not lower the cluster's summed throughput.

    ``theta`` is a scalar or a mapping from cell id to its blank fraction.
    """
    def th(cell):
        return theta.get(cell.id, 0.0) if isinstance(theta, dict) else theta

    with_abs = without = 0.0
    for cell in cells:
        t = th(cell)
        for f in cell.flows.values():
            if cell.kind is CellKind.MACRO:
                with_abs += (1 - t) * f.r_base
            else:
                with_abs += (1 - t) * f.r_base + t * f.r_abs
            without += f.r_base
    return with_abs >= without - 1e-9 * max(abs(without), 1.0)


@dataclass
class SonConfig:
    impl_mode: ImplMode = ImplMode.SHARED
    lb_enabled: bool = False
    # dB per unit load gap per tick; decaying so offsets settle under stationary traffic
    lb_schedule: StepSchedule = field(default_factory=lambda: StepSchedule("harmonic", 0.3, 30.0))
    cio_max: float = son.CIO_MAX_DB
    abs_algorithm: AbsAlgorithm | None = None
    abs_update: str = "sa"  # "sa", or "optimal": closed form recomputed at every arrival/departure
    optimal_counts: str = "mean"  # counts fed to the "optimal" controller: "mean" estimates or "instantaneous"
    # ABS-ratio steps; the small effective gain eps0 * tau keeps theta smooth once converged
    schedule: StepSchedule = field(default_factory=lambda: StepSchedule("harmonic", 0.005, 2.0))
    theta_min: float = son.THETA_MIN
    theta_max: float = son.THETA_MAX
    cluster_size: int = 3
    update_period: float = 1.0
    half_life: float = 30.0
    outer_macro_users: float = 5.0
    residual: float = 0.0
    interference: str = "full"  # "full": every cell always transmits; "load": simulated cells only while busy
    load_estimator: str = "busy"  # "busy" or "demand"
    overload_bound: float = 200.0
    theta_quantum: float | None = None  # reporting only, e.g. 1/8

    def __post_init__(self):
        self.impl_mode = ImplMode(self.impl_mode)
        if self.abs_algorithm is not None:
            self.abs_algorithm = AbsAlgorithm(self.abs_algorithm)
            if self.abs_update == "sa":
                son.require_convergent(self.schedule)
        if self.abs_update not in ("sa", "optimal"):
            raise ValueError("abs_update must be 'sa' or 'optimal'")
        if self.optimal_counts not in ("instantaneous", "mean"):
            raise ValueError("optimal_counts must be 'instantaneous' or 'mean'")
        if self.interference not in ("full", "load"):
            raise ValueError("interference must be 'full' or 'load'")
        if self.load_estimator not in ("busy", "demand"):
            raise ValueError("load_estimator must be 'busy' or 'demand'")
        if not 0 < self.theta_min <= self.theta_max < 1:
            raise ValueError("need 0 < theta_min <= theta_max < 1")
        if self.cio_max < 0 or self.update_period <= 0 or self.half_life <= 0:
            raise ValueError("cio_max >= 0, update_period > 0 and half_life > 0 required")
        if not 0.0 <= self.residual <= 1.0:
            raise ValueError("residual must lie in [0, 1]")


@dataclass
class FlowRecord:
    id: int
    arrival: float
    departure: float
    size: float
    cell: int
    is_cre: bool
    hotspot: bool
    x: float
    y: float

    @property
    def throughput(self) -> float:
        return self.size / (self.departure - self.arrival)


@dataclass
class EventLog:
    """Everything a run produces; KPIs are computed from it afterwards."""

    events: list
    flows: list
    trace: dict
    macro_ids: list
    small_ids: list
    duration: float
    seed: int
    summary: dict

    def write_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            for kind, t, cell, fid, rate in self.events:
                fh.write(json.dumps({"event": kind, "time": t, "cell": cell, "flow": fid, "cell_rate": rate}) + "\n")
            fh.write(json.dumps({"event": "summary", **self.summary}) + "\n")


class Simulator:
    def __init__(self, layout: NetworkLayout, traffic: TrafficConfig, son_config: SonConfig | None = None,
                 seed: int = 0, area: ServiceArea | None = None, record_events: bool = True):
        self.layout = layout
        self.traffic = traffic
        self.cfg = son_config or SonConfig()
        self.seed = seed
        self.record_events = record_events
        self.area = area or ServiceArea(layout)
        self.rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.arrivals = ArrivalProcess(traffic, self.area, self.rng)

        cfg = self.cfg
        self.macro_ids = layout.center_macros
        self.small_ids = layout.small_cells
        self.cells: dict[int, CellState] = {}
        for cid in self.macro_ids:
            self.cells[cid] = CellState(cid, CellKind.MACRO)
        for cid in self.small_ids:
            cluster = tuple(layout.strongest_macros(cid, cfg.cluster_size))
            st = CellState(cid, CellKind.SMALL, cluster=cluster, parent=layout.cells[cid].parent)
            if cfg.abs_algorithm is not None:
                st.abs_state = AbsState(cfg.theta_min, 0, cluster, cfg.theta_min, cfg.theta_max)
                st.theta = cfg.theta_min
            self.cells[cid] = st
        self.sim_cells = [self.cells[c] for c in self.macro_ids + self.small_ids]
        self.sim_ids = np.array([c.id for c in self.sim_cells])
        self.outer_mask = np.ones(layout.n_cells, dtype=bool)
        self.outer_mask[self.sim_ids] = False
        self.load_coupled = cfg.interference == "load"
        self.n_ticks = 0
        self.small_mask = np.array([c.kind is CellKind.SMALL for c in layout.cells])
        self.muters = {m: [s for s in self.small_ids if m in self.cells[s].cluster] for m in self.macro_ids}
        self._apply_macro_theta()

    # -- rates ---------------------------------------------------------------

    def _new_flow(self, fid, t, pos, size, hotspot) -> Flow:
        layout = self.layout
        cio = np.zeros(layout.n_cells)
        for s in self.small_ids:
            cio[s] = self.cells[s].cio
        pilot = layout.pilot_dbm(pos)[0]
        att = attach_scores(pilot, cio, self.small_mask)
        rx = layout.received_power_mw(pos)[0]
        s = att.cell
        f = Flow(fid, (float(pos[0]), float(pos[1])), size, t, s, att.is_cre, 0.0, 0.0, hotspot)
        f.signal_mw = float(rx[s])
        rx_sim = rx[self.sim_ids].copy()
        rx_sim[self.sim_ids == s] = 0.0
        f.rx_sim_mw = rx_sim
        f.floor_mw = float(rx[self.outer_mask].sum() + layout.noise_mw)
        f.floor_abs_mw = f.floor_mw
        if layout.cells[s].kind is CellKind.SMALL:
            keep = 1.0 - self.cfg.residual
            cluster = list(self.cells[s].cluster)
            outer = [m for m in cluster if self.outer_mask[m]]
            f.floor_abs_mw -= keep * float(rx[outer].sum())
            f.abs_keep = np.where(np.isin(self.sim_ids, cluster), self.cfg.residual, 1.0)
        return f

    def _transmitting(self) -> np.ndarray:
        if not self.load_coupled:
            return np.ones(len(self.sim_cells))
        return np.array([1.0 if c.flows else 0.0 for c in self.sim_cells])

    def _link_rates(self, flows, on: np.ndarray) -> None:
        bw = self.layout.bandwidth
        for f in flows:
            f.r_base = link_rate(f.signal_mw / (f.floor_mw + f.rx_sim_mw @ on), bw)
            if f.abs_keep is None:
                f.r_abs = f.r_base
            else:
                f.r_abs = link_rate(f.signal_mw / (f.floor_abs_mw + f.rx_sim_mw @ (on * f.abs_keep)), bw)

    def _refresh_rates(self, cell: CellState) -> None:
        mode = self.cfg.impl_mode
        theta = cell.theta
        for f in cell.flows.values():
            f.rate = flow_throughput(f, cell, theta, mode)

    def _apply_macro_theta(self) -> None:
        if self.cfg.abs_algorithm is None:
            return
        for m in self.macro_ids:
            self.cells[m].theta = son.macro_absr_aggregate([self.cells[s].theta for s in self.muters[m]])

    # -- control -------------------------------------------------------------

    def _macro_count(self, m: int, instantaneous: bool) -> float:
        if m in self.cells:
            cell = self.cells[m]
            return float(len(cell.flows)) if instantaneous else cell.counters.n_mean
        return self.cfg.outer_macro_users

    def _counts(self, cell: CellState, instantaneous: bool = False) -> ClusterCounts:
        """Mean user counts for one small cell's cluster, or the current counts."""
        n_macro = tuple(self._macro_count(m, instantaneous) for m in cell.cluster)
        if instantaneous:
            n_cre = cell.n_cre
            return ClusterCounts(float(n_cre), float(len(cell.flows) - n_cre), n_macro)
        c = cell.counters
        return ClusterCounts(c.n_mean_cre, c.n_mean_center, n_macro)

    def _pico_rates(self, cell: CellState) -> PicoRates:
        flows = list(cell.flows.values())
        return PicoRates(np.array([f.r_base for f in flows]), np.array([f.r_abs for f in flows]))

    def _optimal_theta(self, cell: CellState) -> float:
        cfg = self.cfg
        counts = self._counts(cell, instantaneous=cfg.optimal_counts == "instantaneous")
        if cfg.abs_algorithm is AbsAlgorithm.PF1:
            return son.absr_pf1_optimal(counts, cfg.theta_min, cfg.theta_max)[0]
        if cfg.abs_algorithm is AbsAlgorithm.PF2:
            return son.absr_pf2_optimal(counts.n_small, counts.sum_macro, cfg.theta_min, cfg.theta_max)
        return son.absr_pf2_exact_optimal(self._pico_rates(cell), counts, cfg.theta_min, cfg.theta_max)

    def _sa_step(self, cell: CellState) -> None:
        cfg = self.cfg
        counts = self._counts(cell)
        if cfg.abs_algorithm is AbsAlgorithm.PF1:
            cell.abs_state = son.absr_pf1_update(cell.abs_state, counts, cfg.schedule)
        elif cfg.abs_algorithm is AbsAlgorithm.PF2:
            cell.abs_state = son.absr_pf2_update(cell.abs_state, counts, cfg.schedule)
        else:
            cell.abs_state = son.absr_pf2_exact_update(cell.abs_state, self._pico_rates(cell), counts, cfg.schedule)
        cell.theta = cell.abs_state.theta

    def _load(self, cell: CellState) -> float:
        if self.cfg.load_estimator == "demand":
            return min(cell.counters.demand_hat, 1.0)
        return cell.counters.rho_hat

    def _son_tick(self) -> None:
        cfg = self.cfg
        self.n_ticks += 1
        for sid in self.small_ids:
            cell = self.cells[sid]
            if cfg.lb_enabled:
                new = son.lb_update(CioState(cell.cio, cfg.cio_max), self._load(self.cells[cell.parent]),
                                    self._load(cell), cfg.lb_schedule.step(self.n_ticks))
                cell.cio = new.cio_db
            if cfg.abs_algorithm is not None and cfg.abs_update == "sa":
                self._sa_step(cell)
        self._apply_macro_theta()

    def _per_event_optimum(self) -> None:
        for sid in self.small_ids:
            cell = self.cells[sid]
            cell.theta = self._optimal_theta(cell)
        self._apply_macro_theta()

    # -- main loop -----------------------------------------------------------

    def run(self, duration: float) -> EventLog:
        if not duration > 0:
            raise ValueError("duration must be positive")
        cfg = self.cfg
        per_event_opt = cfg.abs_algorithm is not None and cfg.abs_update == "optimal"
        log2 = math.log(2.0)
        hl = cfg.half_life
        events = []
        records = []
        trace = {k: [] for k in ("time", "theta", "cio", "macro_theta", "rho_hat", "n_mean", "busy_time",
                                 "n_active", "cluster_condition")}
        t = 0.0
        next_arrival = self.arrivals.next_interarrival()
        next_tick = cfg.update_period
        fid = 0
        n_arrivals = n_departures = 0
        active = {}  # flow id -> (flow, cell)
        max_mean = 0.0
        cond_hits = cond_total = starved_ticks = 0
        sim_cells = self.sim_cells

        while True:
            next_dep, dep_id = math.inf, None
            for i, (f, _) in active.items():
                if f.rate > 0:
                    td = t + f.size_remaining / f.rate
                    if td < next_dep:
                        next_dep, dep_id = td, i
            t_next = min(next_dep, next_arrival, next_tick, duration)
            dt = t_next - t
            if dt > 0:
                w = math.exp(-dt * log2 / hl)
                for i, (f, _) in active.items():
                    # the departing flow finishes exactly; time rounding must not leave crumbs
                    done = f.size_remaining if (i == dep_id and t_next == next_dep) else min(f.rate * dt, f.size_remaining)
                    f.size_remaining -= done
                    f.downloaded += done
                for cell in sim_cells:
                    c = cell.counters
                    n = len(cell.flows)
                    n_cre = cell.n_cre if cell.kind is CellKind.SMALL and n else 0
                    c.n_active = n
                    c.n_mean = w * c.n_mean + (1 - w) * n
                    c.n_mean_cre = w * c.n_mean_cre + (1 - w) * n_cre
                    c.n_mean_center = w * c.n_mean_center + (1 - w) * (n - n_cre)
                    c.rho_hat = w * c.rho_hat + (1 - w) * (1.0 if n else 0.0)
                    c.demand_hat *= w
                    if n:
                        cell.busy_time += dt
                t = t_next
            if t >= duration and min(next_dep, next_arrival, next_tick) > duration:
                break

            if t_next == next_dep and dep_id is not None:
                f, cell = active.pop(dep_id)
                del cell.flows[f.id]
                n_departures += 1
                rel = abs(f.downloaded - f.size) / f.size
                if rel > 1e-6:
                    raise RuntimeError(f"flow {f.id} left with {f.downloaded} of {f.size} bits")
                f.size_remaining = 0.0
                records.append(FlowRecord(f.id, f.arrival_time, t, f.size, cell.id, f.is_cre, f.hotspot,
                                          f.position[0], f.position[1]))
                coupled = self.load_coupled and not cell.flows
                if coupled:
                    self._link_rates([x for x, _ in active.values()], self._transmitting())
                if per_event_opt or coupled:
                    if per_event_opt:
                        self._per_event_optimum()
                    for c in sim_cells:
                        self._refresh_rates(c)
                else:
                    self._refresh_rates(cell)
                if self.record_events:
                    events.append(("departure", t, cell.id, f.id, sum(x.rate for x in cell.flows.values())))
            elif t_next == next_arrival:
                pos, size, hotspot = self.arrivals.draw()
                f = self._new_flow(fid, t, pos, size, hotspot)
                fid += 1
                n_arrivals += 1
                cell = self.cells[f.serving_cell]
                coupled = self.load_coupled and not cell.flows
                cell.flows[f.id] = f
                active[f.id] = (f, cell)
                on = self._transmitting()
                self._link_rates([x for x, _ in active.values()] if coupled else [f], on)
                if cfg.load_estimator == "demand":
                    peak = f.r_base if cell.kind is CellKind.MACRO else max(f.r_base, 1e-9)
                    cell.counters.demand_hat += (size / peak) * log2 / hl
                if per_event_opt or coupled:
                    if per_event_opt:
                        self._per_event_optimum()
                    for c in sim_cells:
                        self._refresh_rates(c)
                else:
                    self._refresh_rates(cell)
                next_arrival = t + self.arrivals.next_interarrival()
                if self.record_events:
                    events.append(("arrival", t, cell.id, f.id, sum(x.rate for x in cell.flows.values())))
            elif t_next == next_tick:
                self._son_tick()
                for c in sim_cells:
                    self._refresh_rates(c)
                next_tick = round(t + cfg.update_period, 9)
                thetas = {c.id: c.theta for c in sim_cells}
                ok = cluster_throughput_condition(sim_cells, thetas)
                cond_hits += ok
                cond_total += 1
                if cfg.impl_mode is ImplMode.PROTECTED:
                    starved_ticks += any(c.kind is CellKind.SMALL and c.n_cre and c.theta <= cfg.theta_min
                                         for c in sim_cells)
                self._record(trace, t, ok)
                mean_now = max(c.counters.n_mean for c in sim_cells)
                max_mean = max(max_mean, mean_now)
                if mean_now > cfg.overload_bound:
                    worst = max(sim_cells, key=lambda c: c.counters.n_mean)
                    raise OverloadError(f"cell {worst.id} averages {worst.counters.n_mean:.1f} active flows "
                                        f"at t={t:.0f}s (bound {cfg.overload_bound})")
                if self.record_events:
                    events.append(("tick", t, -1, -1, 0.0))
            if t >= duration:
                break

        if starved_ticks:
            warnings.warn(f"{starved_ticks} ticks had range-extended users served only during a blank "
                          f"fraction at its floor {cfg.theta_min}", StarvationWarning, stacklevel=2)
        trace = {k: np.asarray(v) for k, v in trace.items()}
        summary = {
            "duration": duration,
            "seed": self.seed,
            "arrivals": n_arrivals,
            "departures": n_departures,
            "active_at_end": len(active),
            "arrival_rate": self.arrivals.rate,
            "area_km2": self.area.area_km2,
            "hotspot_km2": self.area.hotspot_km2,
            "max_mean_active": max_mean,
            "cluster_condition_fraction": cond_hits / cond_total if cond_total else float("nan"),
            "starved_ticks": starved_ticks,
        }
        return EventLog(events, records, trace, list(self.macro_ids), list(self.small_ids), duration, self.seed,
                        summary)

    def _record(self, trace, t, cond_ok) -> None:
        q = self.cfg.theta_quantum
        small = [self.cells[s] for s in self.small_ids]
        theta = [c.theta for c in small]
        if q:
            theta = [round(x / q) * q for x in theta]
        trace["time"].append(t)
        trace["theta"].append(theta)
        trace["cio"].append([c.cio for c in small])
        trace["macro_theta"].append([self.cells[m].theta for m in self.macro_ids])
        trace["rho_hat"].append([c.counters.rho_hat for c in self.sim_cells])
        trace["n_mean"].append([c.counters.n_mean for c in self.sim_cells])
        trace["busy_time"].append([c.busy_time for c in self.sim_cells])
        trace["n_active"].append([len(c.flows) for c in self.sim_cells])
        trace["cluster_condition"].append(cond_ok)


def simulate(layout: NetworkLayout, traffic: TrafficConfig, son_config: SonConfig, duration: float,
             seed: int, **kw) -> EventLog:
    return Simulator(layout, traffic, son_config, seed, **kw).run(duration)
