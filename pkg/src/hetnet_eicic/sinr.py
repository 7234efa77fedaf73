"""SINR with and without macro muting, offloading gain and the max-offset sweep."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .layout import CellKind, NetworkLayout


@dataclass(frozen=True)
class SinrBreakdown:
    signal_mw: float
    interference_other_mw: float  # non-cluster cells plus thermal noise
    interference_cluster_mw: float  # the muted (cluster) macros
    sinr_normal: float
    sinr_abs: float


def breakdown(signal, cluster, other, residual=0.0) -> SinrBreakdown:
    """Assemble SINRs from linear power terms (mW)."""
    return SinrBreakdown(
        signal_mw=signal,
        interference_other_mw=other,
        interference_cluster_mw=cluster,
        sinr_normal=signal / (cluster + other),
        sinr_abs=signal / (residual * cluster + other),
    )


def _check_point(point, layout):
    if not layout.contains(point)[0]:
        raise ValueError(f"point {tuple(np.ravel(point))} is outside the simulation area")


def sinr_at(point, serving: int, muted, layout: NetworkLayout, residual: float = 0.0) -> SinrBreakdown:
    """SINR at ``point`` served by ``serving`` with and without muting ``muted``.

    ``residual`` is the fraction of a muted macro's power still radiated
    during blank subframes.
    """
    _check_point(point, layout)
    muted = [m for m in muted if m != serving]
    for m in muted:
        if layout.cells[m].kind is not CellKind.MACRO:
            raise ValueError(f"cell {m} is not a macro and cannot be muted")
    rx = layout.received_power_mw(point)[0]
    signal = float(rx[serving])
    cluster = float(rx[muted].sum()) if muted else 0.0
    other = float(rx.sum() - signal - cluster + layout.noise_mw)
    return breakdown(signal, cluster, other, residual)


def sinr_gain_closed(pico_mw, macro_mw, c0_mw):
    """Offloading gain ``a/b + a^2/(b c0)`` for pico power a, cluster power b."""
    a, b, c0 = (np.asarray(v, dtype=float) for v in (pico_mw, macro_mw, c0_mw))
    return a / b + a * a / (b * c0)


def muting_condition_closed(pico_mw, macro_mw, c0_mw):
    """``a^2 / (b - a) > c0``; points where the pico already beats the cluster pass."""
    a, b, c0 = (np.asarray(v, dtype=float) for v in (pico_mw, macro_mw, c0_mw))
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = a * a / (b - a)
    return np.where(b > a, lhs > c0, True)


def cluster_terms(layout: NetworkLayout, points, pico: int, cluster, rx_mw=None):
    """Pico power, summed cluster power and residual interference ``C0`` per point."""
    rx = layout.received_power_mw(points) if rx_mw is None else rx_mw
    cluster = list(cluster)
    a = rx[:, pico]
    b = rx[:, cluster].sum(axis=1) if cluster else np.zeros(len(rx))
    c0 = rx.sum(axis=1) - a - b + layout.noise_mw
    return a, b, c0


def sinr_gain_exact(pico_mw, serving_macro_mw, c0_mw, total_mw):
    """Muted-pico SINR over the SINR from the serving macro (everyone else interfering).

    ``c0_mw`` excludes the pico and every muted macro; ``total_mw`` is the
    sum of all received powers plus noise. With a one-macro cluster equal
    to the serving macro this reduces to :func:`sinr_gain_closed`.
    """
    a, b, c0, t = (np.asarray(v, dtype=float) for v in (pico_mw, serving_macro_mw, c0_mw, total_mw))
    return a * (t - b) / (b * c0)


def sinr_gain(point, pico: int, macro_cluster, layout: NetworkLayout) -> float:
    """SINR gain of offloading the user at ``point`` to ``pico`` with the cluster muted.

    The reference is the SINR when served by the strongest cluster macro
    with the pico and all other cells interfering.
    """
    cluster = list(macro_cluster)
    if not cluster:
        raise ValueError("macro_cluster must not be empty")
    pico_side = sinr_at(point, pico, cluster, layout)
    rx = layout.received_power_mw(point)[0]
    server = max(cluster, key=lambda m: (rx[m], -m))
    macro_side = sinr_at(point, server, [], layout)
    return pico_side.sinr_abs / macro_side.sinr_normal


def muting_gain_condition(point, pico: int, macro_cluster, layout: NetworkLayout) -> bool:
    _check_point(point, layout)
    a, b, c0 = cluster_terms(layout, point, pico, macro_cluster)
    return bool(muting_condition_closed(a, b, c0)[0])


@dataclass(frozen=True)
class SweepRow:
    m: int
    max_cio_db: float
    mean_sinr_gain_db: float


def _grid_around(layout, pico, radius, spacing):
    x0, y0 = layout.cells[pico].position
    xs = np.arange(-radius, radius + spacing / 2, spacing)
    gx, gy = np.meshgrid(x0 + xs, y0 + xs)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return pts[layout.contains(pts)]


def max_cio_sweep(layout: NetworkLayout, pico: int, m_values, spacing=5.0, cio_step=0.5,
                  cio_cap=20.0, radius=None) -> list[SweepRow]:
    """Largest offset keeping every range-extended point above unit gain, per cluster size.

    Cluster macros are the ``m`` most interfering at the pico site. Only
    points taken over from a macro count as range-extended; points won from
    neighbouring small cells are ignored. The gain compares the muted-pico
    SINR with the SINR the user had at its natural macro, which is monotone
    in the cluster (the lumped ``a^2/(sum b - a) > C0`` test is not). The
    mean gain is averaged in dB over the range-extended points at the
    returned offset; an empty range-extension area reports 0 dB.
    """
    if radius is None:
        radius = layout.intersite_distance / 2
    pts = _grid_around(layout, pico, radius, spacing)
    rx = layout.received_power_mw(pts)
    pilot = layout.pilot_dbm(pts)
    natural = np.argmax(pilot, axis=1)
    base_score = pilot.copy()
    cios = np.arange(0.0, cio_cap + cio_step / 2, cio_step)
    cre_sets = []
    for cio in cios:
        base_score[:, pico] = pilot[:, pico] + cio
        serving = np.argmax(base_score, axis=1)
        cre_sets.append((serving == pico) & (natural != pico))

    n_macros = len(layout.macros)
    macro_natural = np.isin(natural, layout.macros)
    cre_sets = [cre & macro_natural for cre in cre_sets]
    total = rx.sum(axis=1) + layout.noise_mw
    serving_mw = rx[np.arange(len(pts)), natural]
    rows = []
    for m in m_values:
        if not 0 <= m <= n_macros:
            raise ValueError(f"cluster size {m} outside 0..{n_macros}")
        cluster = layout.strongest_macros(pico, m)
        a, b, c0 = cluster_terms(layout, pts, pico, cluster, rx)
        gain = sinr_gain_exact(a, serving_mw, c0, total)
        ok = gain > 1.0
        best_idx = 0
        for i, cre in enumerate(cre_sets):
            if not np.all(ok[cre]):
                break
            best_idx = i
        cre = cre_sets[best_idx]
        mean_gain = float(np.mean(10 * np.log10(gain[cre]))) if cre.any() else 0.0
        rows.append(SweepRow(int(m), float(cios[best_idx]), mean_gain))
    return rows


def sweep_to_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["M", "max_cio_db", "mean_sinr_gain_db"])
        for r in rows:
            w.writerow([r.m, r.max_cio_db, r.mean_sinr_gain_db])
