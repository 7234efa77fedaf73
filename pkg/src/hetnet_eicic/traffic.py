"""Elastic traffic: two superposed Poisson layers over the cluster's service area."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import NetworkLayout


@dataclass
class TrafficConfig:
    lambda_uniform: float = 14.0  # users/s/km^2 over the whole service area
    lambda_hotspot: float = 6.0  # users/s/km^2 over small-cell coverage (zero offsets)
    mean_file_size: float = 10e6  # bits, exponentially distributed

    def __post_init__(self):
        for name in ("lambda_uniform", "lambda_hotspot"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative rate, got {v}")
        if not np.isfinite(self.mean_file_size) or self.mean_file_size <= 0:
            raise ValueError("mean_file_size must be positive")


class ServiceArea:
    """Regions served at zero offsets by the simulated (center) cells.

    Areas are measured on a square grid; positions are drawn by rejection
    so they are exactly uniform over each region.
    """

    def __init__(self, layout: NetworkLayout, grid_spacing: float = 2.0):
        self.layout = layout
        self.center_cells = np.array(sorted(layout.center_macros + layout.small_cells))
        self.small = np.array(layout.small_cells, dtype=int)
        x0, x1, y0, y1 = layout.bounds()
        xs = np.arange(x0 + grid_spacing / 2, x1, grid_spacing)
        ys = np.arange(y0 + grid_spacing / 2, y1, grid_spacing)
        cell_area = grid_spacing ** 2 / 1e6
        pts_all, nat_all = [], []
        # chunk rows to bound memory
        for chunk in np.array_split(ys, max(1, len(ys) // 100)):
            gx, gy = np.meshgrid(xs, chunk)
            pts = np.column_stack([gx.ravel(), gy.ravel()])
            nat = np.argmax(layout.pilot_dbm(pts), axis=1)
            keep = np.isin(nat, self.center_cells)
            pts_all.append(pts[keep])
            nat_all.append(nat[keep])
        pts = np.concatenate(pts_all)
        nat = np.concatenate(nat_all)
        hot = np.isin(nat, self.small)
        self.area_km2 = len(pts) * cell_area
        self.hotspot_km2 = int(hot.sum()) * cell_area
        half = grid_spacing / 2
        self.box = (pts[:, 0].min() - half, pts[:, 0].max() + half, pts[:, 1].min() - half, pts[:, 1].max() + half)
        if hot.any():
            hp = pts[hot]
            self.hot_box = (hp[:, 0].min() - half, hp[:, 0].max() + half, hp[:, 1].min() - half, hp[:, 1].max() + half)
        else:
            self.hot_box = None

    def _draw(self, rng, box, allowed, batch=64):
        x0, x1, y0, y1 = box
        while True:
            cand = np.column_stack([rng.uniform(x0, x1, batch), rng.uniform(y0, y1, batch)])
            nat = np.argmax(self.layout.pilot_dbm(cand), axis=1)
            ok = np.flatnonzero(np.isin(nat, allowed))
            if ok.size:
                return cand[ok[0]]

    def sample_uniform(self, rng) -> np.ndarray:
        return self._draw(rng, self.box, self.center_cells)

    def sample_hotspot(self, rng) -> np.ndarray:
        return self._draw(rng, self.hot_box, self.small)


class ArrivalProcess:
    """Superposition of the uniform and hotspot Poisson layers."""

    def __init__(self, traffic: TrafficConfig, area: ServiceArea, rng: np.random.Generator):
        self.traffic = traffic
        self.area = area
        self.rng = rng
        self.rate_uniform = traffic.lambda_uniform * area.area_km2
        self.rate_hotspot = traffic.lambda_hotspot * area.hotspot_km2 if area.hot_box is not None else 0.0
        self.rate = self.rate_uniform + self.rate_hotspot

    def next_interarrival(self) -> float:
        if self.rate <= 0:
            return np.inf
        return self.rng.exponential(1.0 / self.rate)

    def draw(self) -> tuple[np.ndarray, float, bool]:
        """Position, file size and hotspot flag of one arriving user."""
        hotspot = self.rng.uniform() * self.rate >= self.rate_uniform
        pos = self.area.sample_hotspot(self.rng) if hotspot else self.area.sample_uniform(self.rng)
        size = self.rng.exponential(self.traffic.mean_file_size)
        return pos, size, bool(hotspot)
