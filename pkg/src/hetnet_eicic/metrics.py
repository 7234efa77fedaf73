"""KPIs from a simulation run and their CSV/JSON serialisation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .flowsim import EventLog

WARMUP_S = 300.0
CET_PERCENTILE = 5.0
PERCENTILE_METHOD = "inverted_cdf"  # an actual sample, so the CDF and CET agree exactly


class NoCompletedFlows(ValueError):
    pass


@dataclass
class KpiReport:
    mut: float  # bit/s
    cet: float  # bit/s
    max_load_macro: float
    max_load_small: float
    n_flows: int
    cdf: list = field(default_factory=list)  # (throughput_bps, probability)
    theta_trace: list = field(default_factory=list)  # per tick: [time, theta per small cell...]
    cio_trace: list = field(default_factory=list)
    loads: dict = field(default_factory=dict)  # cell id (str) -> time-average busy fraction

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KpiReport":
        d = dict(d)
        d["cdf"] = [tuple(x) for x in d.get("cdf", [])]
        return cls(**d)


def throughputs(event_log: EventLog, warmup: float = WARMUP_S) -> np.ndarray:
    """Per-flow throughputs (size / sojourn) of flows arriving after the warm-up."""
    return np.array([r.throughput for r in event_log.flows if r.arrival >= warmup])


def empirical_cdf(samples) -> list[tuple[float, float]]:
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    return [(float(v), (i + 1) / n) for i, v in enumerate(x)]


def cell_edge_throughput(samples) -> float:
    return float(np.percentile(samples, CET_PERCENTILE, method=PERCENTILE_METHOD))


def _window_loads(event_log: EventLog, warmup: float) -> dict[int, float]:
    tr = event_log.trace
    ids = event_log.macro_ids + event_log.small_ids
    times = np.asarray(tr["time"])
    if times.size == 0:
        return {c: 0.0 for c in ids}
    busy = np.asarray(tr["busy_time"])
    end = times[-1]
    start_idx = int(np.searchsorted(times, warmup))
    if start_idx >= len(times):
        start_idx = 0
    t0 = times[start_idx] if start_idx else 0.0
    b0 = busy[start_idx] if start_idx else np.zeros(len(ids))
    span = end - t0
    if span <= 0:
        return {c: 0.0 for c in ids}
    loads = (busy[-1] - b0) / span
    return {c: float(min(max(v, 0.0), 1.0)) for c, v in zip(ids, loads)}


def compute_kpis(event_log: EventLog, layout=None, warmup: float = WARMUP_S) -> KpiReport:
    """MUT, CET, CDF and per-tier maximum loads over the post-warm-up window."""
    x = throughputs(event_log, warmup)
    if x.size == 0:
        raise NoCompletedFlows(
            f"no flow completed after the {warmup:.0f} s warm-up "
            f"({len(event_log.flows)} completed in total over {event_log.duration:.0f} s)")
    loads = _window_loads(event_log, warmup)
    macro = [loads[c] for c in event_log.macro_ids]
    small = [loads[c] for c in event_log.small_ids]
    tr = event_log.trace
    times = np.asarray(tr["time"])
    theta = [[float(t), *map(float, row)] for t, row in zip(times, tr["theta"])]
    cio = [[float(t), *map(float, row)] for t, row in zip(times, tr["cio"])]
    return KpiReport(
        mut=float(np.mean(x)),
        cet=cell_edge_throughput(x),
        max_load_macro=max(macro) if macro else 0.0,
        max_load_small=max(small) if small else 0.0,
        n_flows=int(x.size),
        cdf=empirical_cdf(x),
        theta_trace=theta,
        cio_trace=cio,
        loads={str(k): v for k, v in loads.items()},
    )


def gain(value: float, baseline: float) -> float:
    """Relative gain in percent."""
    if baseline == 0:
        raise ZeroDivisionError("baseline KPI is zero")
    return 100.0 * (value - baseline) / baseline


def compare_cases(reports: dict, baseline: str = "NoSON") -> dict:
    """Percentage MUT and CET gains of every case against ``baseline``."""
    if baseline not in reports:
        raise KeyError(f"baseline case {baseline!r} missing; have {sorted(reports)}")
    base = reports[baseline]
    return {name: {"mut_gain_pct": gain(r.mut, base.mut), "cet_gain_pct": gain(r.cet, base.cet)}
            for name, r in reports.items()}


def aggregate(reports: list) -> dict:
    """Mean and sample standard deviation of the scalar KPIs over seeds."""
    if not reports:
        raise ValueError("nothing to aggregate")
    out = {}
    for key in ("mut", "cet", "max_load_macro", "max_load_small", "n_flows"):
        v = np.array([getattr(r, key) for r in reports], dtype=float)
        out[key] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
    return out


def _open(path, mode="w"):
    try:
        return open(path, mode, newline="")
    except OSError as exc:
        raise OSError(f"cannot open {path}: {exc.strerror}") from exc


def export(report: KpiReport, path, format: str = "json") -> list[Path]:
    """Write ``report``; csv produces a directory of tables, json a single file.

    Returns the files written.
    """
    path = Path(path)
    if format == "json":
        with _open(path) as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        return [path]
    if format != "csv":
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {path}: {exc.strerror}") from exc
    files = []
    cdf = path / "cdf.csv"
    with _open(cdf) as fh:
        w = csv.writer(fh)
        w.writerow(["throughput_bps", "cdf"])
        w.writerows(report.cdf)
    files.append(cdf)
    for name, rows in (("theta_trace.csv", report.theta_trace), ("cio_trace.csv", report.cio_trace)):
        f = path / name
        with _open(f) as fh:
            w = csv.writer(fh)
            width = len(rows[0]) - 1 if rows else 0
            w.writerow(["time_s", *[f"small_{i}" for i in range(width)]])
            w.writerows(rows)
        files.append(f)
    scalars = path / "kpis.csv"
    with _open(scalars) as fh:
        w = csv.writer(fh)
        w.writerow(["kpi", "value"])
        for key in ("mut", "cet", "max_load_macro", "max_load_small", "n_flows"):
            w.writerow([key, getattr(report, key)])
    files.append(scalars)
    return files


def load_json(path) -> KpiReport:
    with _open(path, "r") as fh:
        return KpiReport.from_dict(json.load(fh))


def relative_change(series, window: int, floor: float) -> np.ndarray:
    """``|x(t+window) - x(t)| / max(|x(t)|, floor)`` for every start index."""
    x = np.asarray(series, dtype=float)
    if len(x) <= window:
        return np.zeros(0)
    a, b = x[:-window], x[window:]
    return np.abs(b - a) / np.maximum(np.abs(a), floor)


def settling_time(times, series, window_s: float, tol: float, floor: float) -> float:
    """First time after which every ``window_s`` change stays below ``tol``; inf if never."""
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return math.inf
    dt = times[1] - times[0]
    window = int(round(window_s / dt))
    rc = relative_change(series, window, floor)
    if rc.size == 0:
        return math.inf
    bad = np.flatnonzero(rc >= tol)
    if bad.size == 0:
        return float(times[0])
    last = bad[-1] + 1
    return float(times[last]) if last < rc.size else math.inf
