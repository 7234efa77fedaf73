"""Hexagonal trisector geometry, pathloss and best-server attachment.

Cells are indexed by integers in a fixed order: the three center macro
sectors first, then the small cells, then the sectors of the surrounding
interferer tier. Lower index wins exact attachment ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

MIN_DISTANCE_M = 10.0
THERMAL_NOISE_DBM_HZ = -174.0


class CellKind(str, Enum):
    MACRO = "macro"
    SMALL = "small"


@dataclass(frozen=True)
class PathlossModel:
    """Log-distance model ``intercept + slope * log10(d_km)``."""

    intercept_db: float
    slope_db: float

    def __call__(self, distance_km):
        d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_M / 1000.0)
        return self.intercept_db + self.slope_db * np.log10(d)


MACRO_PATHLOSS = PathlossModel(128.1, 37.6)
SMALL_PATHLOSS = PathlossModel(140.7, 36.7)


def pathloss(kind, distance_km):
    """Pathloss in dB for a macro or small cell at ``distance_km``.

    Distances under 10 m are clamped to 10 m.
    """
    model = MACRO_PATHLOSS if CellKind(kind) is CellKind.MACRO else SMALL_PATHLOSS
    return model(distance_km)


def antenna_attenuation_db(angle_rad, beamwidth_deg=70.0, max_attenuation_db=25.0):
    """Horizontal parabolic sector pattern, ``min(12 (phi/phi3dB)^2, Am)``."""
    phi = np.degrees(np.angle(np.exp(1j * np.asarray(angle_rad, dtype=float))))
    return np.minimum(12.0 * (phi / beamwidth_deg) ** 2, max_attenuation_db)


@dataclass(frozen=True)
class Cell:
    id: int
    kind: CellKind
    position: tuple[float, float]
    tx_power_dbm: float
    pilot_power_dbm: float
    azimuth: float | None = None  # rad, macro sectors only
    site: int | None = None  # macro site index
    parent: int | None = None  # parent macro sector of a small cell
    center: bool = False  # part of the simulated eICIC cluster


@dataclass
class ScenarioConfig:
    intersite_distance: float = 500.0
    bandwidth: float = 10e6
    macro_tx_power_dbm: float = 46.0
    small_tx_power_dbm: float = 30.0
    small_per_sector: int = 4
    small_edge_fraction: float = 0.7
    sectors_per_site: int = 3
    interferer_ring: bool = True
    beamwidth_deg: float = 70.0
    max_attenuation_db: float = 25.0
    macro_pathloss: tuple[float, float] = (128.1, 37.6)
    small_pathloss: tuple[float, float] = (140.7, 36.7)
    # explicit small-cell positions override the automatic placement;
    # entries are (x, y, parent_sector_index)
    small_positions: list | None = None


def _sector_edge_distance(site, azimuth, direction, isd):
    """Distance from a trisector site to its sector hexagon boundary along ``direction``."""
    r = isd / 3.0
    center = site + r * np.array([np.cos(azimuth), np.sin(azimuth)])
    verts = [center + r * np.array([np.cos(azimuth + k * np.pi / 3), np.sin(azimuth + k * np.pi / 3)])
             for k in range(6)]
    u = np.array([np.cos(direction), np.sin(direction)])
    best = np.inf
    for a, b in zip(verts, verts[1:] + verts[:1]):
        # solve site + t u = a + s (b - a)
        m = np.column_stack([u, a - b])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        t, s = np.linalg.solve(m, a - site)
        if t > 1e-9 and -1e-9 <= s <= 1 + 1e-9:
            best = min(best, t)
    return best


@dataclass(frozen=True)
class NetworkLayout:
    cells: tuple[Cell, ...]
    intersite_distance: float
    bandwidth: float
    macro_sites: tuple[tuple[float, float], ...]
    interferer_sites: tuple[tuple[float, float], ...]
    beamwidth_deg: float = 70.0
    max_attenuation_db: float = 25.0
    macro_pathloss: PathlossModel = MACRO_PATHLOSS
    small_pathloss: PathlossModel = SMALL_PATHLOSS
    _arrays: dict = field(default_factory=dict, compare=False, repr=False)

    # cached per-cell arrays for vectorised propagation
    def _arr(self, name):
        if not self._arrays:
            a = self._arrays
            a["pos"] = np.array([c.position for c in self.cells], dtype=float)
            a["tx"] = np.array([c.tx_power_dbm for c in self.cells])
            a["pilot"] = np.array([c.pilot_power_dbm for c in self.cells])
            a["is_macro"] = np.array([c.kind is CellKind.MACRO for c in self.cells])
            a["az"] = np.array([c.azimuth if c.azimuth is not None else np.nan for c in self.cells])
        return self._arrays[name]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def center_macros(self) -> list[int]:
        return [c.id for c in self.cells if c.kind is CellKind.MACRO and c.center]

    @property
    def small_cells(self) -> list[int]:
        return [c.id for c in self.cells if c.kind is CellKind.SMALL]

    @property
    def interferer_macros(self) -> list[int]:
        return [c.id for c in self.cells if c.kind is CellKind.MACRO and not c.center]

    @property
    def macros(self) -> list[int]:
        return [c.id for c in self.cells if c.kind is CellKind.MACRO]

    @property
    def noise_mw(self) -> float:
        return 10 ** ((THERMAL_NOISE_DBM_HZ + 10 * np.log10(self.bandwidth)) / 10)

    def bounds(self) -> tuple[float, float, float, float]:
        pos = self._arr("pos")
        m = self.intersite_distance
        return (pos[:, 0].min() - m, pos[:, 0].max() + m, pos[:, 1].min() - m, pos[:, 1].max() + m)

    def contains(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.bounds()
        return np.isfinite(p).all(axis=1) & (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    def received_power_dbm(self, points, power="tx") -> np.ndarray:
        """Received power in dBm, shape ``(n_points, n_cells)``.

        ``power`` selects ``"tx"`` (traffic) or ``"pilot"`` power.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        pos = self._arr("pos")
        diff = p[:, None, :] - pos[None, :, :]
        d_km = np.hypot(diff[..., 0], diff[..., 1]) / 1000.0
        is_macro = self._arr("is_macro")
        pl = np.where(is_macro, self.macro_pathloss(d_km), self.small_pathloss(d_km))
        az = self._arr("az")
        angle = np.arctan2(diff[..., 1], diff[..., 0]) - np.nan_to_num(az)
        sectorised = is_macro & np.isfinite(az)  # omni macros and small cells have no pattern
        att = np.where(sectorised, antenna_attenuation_db(angle, self.beamwidth_deg, self.max_attenuation_db), 0.0)
        return self._arr(power)[None, :] - pl - att

    def received_power_mw(self, points, power="tx") -> np.ndarray:
        return 10 ** (self.received_power_dbm(points, power) / 10)

    def pilot_dbm(self, points) -> np.ndarray:
        return self.received_power_dbm(points, "pilot")

    def cio_vector(self, cio_db: dict[int, float] | None = None) -> np.ndarray:
        v = np.zeros(self.n_cells)
        for cid, val in (cio_db or {}).items():
            v[cid] = val
        return v

    def strongest_macros(self, small_id: int, m: int) -> list[int]:
        """The ``m`` macro sectors received strongest at a small cell's site."""
        rx = self.received_power_dbm(self.cells[small_id].position)[0]
        macros = np.array(self.macros)
        order = np.lexsort((macros, -rx[macros]))
        return [int(c) for c in macros[order[:m]]]


def received_power(layout: NetworkLayout, cell: int, point) -> float:
    """Received traffic power (dBm) from ``cell`` at ``point``."""
    return float(layout.received_power_dbm(point)[0, cell])


def build_layout(config: ScenarioConfig | None = None) -> NetworkLayout:
    cfg = config or ScenarioConfig()
    isd = cfg.intersite_distance
    if not np.isfinite(isd) or isd <= 0:
        raise ValueError(f"intersite_distance must be positive, got {isd}")
    if cfg.sectors_per_site not in (1, 3):
        raise ValueError("sectors_per_site must be 1 (omni) or 3")
    if cfg.small_per_sector < 0:
        raise ValueError("small_per_sector must be >= 0")
    if cfg.bandwidth <= 0:
        raise ValueError("bandwidth must be positive")

    center_site = np.zeros(2)
    ring = [isd * np.array([np.cos(k * np.pi / 3), np.sin(k * np.pi / 3)]) for k in range(6)]
    if not cfg.interferer_ring:
        ring = []
    if cfg.sectors_per_site == 3:
        azimuths = [0.0, 2 * np.pi / 3, 4 * np.pi / 3]
    else:
        azimuths = [None]

    def sectors(site, site_idx, center, start_id):
        out = []
        for k, az in enumerate(azimuths):
            out.append(Cell(id=start_id + k, kind=CellKind.MACRO, position=(float(site[0]), float(site[1])),
                            tx_power_dbm=cfg.macro_tx_power_dbm, pilot_power_dbm=cfg.macro_tx_power_dbm,
                            azimuth=az, site=site_idx, center=center))
        return out

    cells = sectors(center_site, 0, True, 0)
    n_center = len(cells)

    if cfg.small_positions is not None:
        small = [(float(x), float(y), int(parent)) for x, y, parent in cfg.small_positions]
    else:
        small = []
        n = cfg.small_per_sector
        for sector in cells:
            az = sector.azimuth if sector.azimuth is not None else 0.0
            width = 2 * np.pi / 3 if sector.azimuth is not None else 2 * np.pi
            for j in range(n):
                direction = az - width / 2 + width * (j + 0.5) / n
                if sector.azimuth is not None:
                    reach = _sector_edge_distance(center_site, az, direction, isd)
                else:
                    reach = isd / np.sqrt(3)
                pos = center_site + cfg.small_edge_fraction * reach * np.array([np.cos(direction), np.sin(direction)])
                small.append((float(pos[0]), float(pos[1]), sector.id))
    for j, (x, y, parent) in enumerate(small):
        if not 0 <= parent < n_center:
            raise ValueError(f"small cell {j} has unknown parent sector {parent}")
        cells.append(Cell(id=len(cells), kind=CellKind.SMALL, position=(x, y),
                          tx_power_dbm=cfg.small_tx_power_dbm, pilot_power_dbm=cfg.small_tx_power_dbm,
                          parent=parent, center=True))
    for i, site in enumerate(ring):
        cells.extend(sectors(site, i + 1, False, len(cells)))

    if not cells:
        raise ValueError("layout has no cells")
    return NetworkLayout(
        cells=tuple(cells),
        intersite_distance=isd,
        bandwidth=cfg.bandwidth,
        macro_sites=(tuple(center_site),),
        interferer_sites=tuple(tuple(s) for s in ring),
        beamwidth_deg=cfg.beamwidth_deg,
        max_attenuation_db=cfg.max_attenuation_db,
        macro_pathloss=PathlossModel(*cfg.macro_pathloss),
        small_pathloss=PathlossModel(*cfg.small_pathloss),
    )


class Attachment(NamedTuple):
    cell: int
    is_cre: bool
    tie: bool


def attach_scores(pilot_dbm, cio_db, small_mask=None) -> Attachment:
    """Best server over received pilots (dBm) plus offsets (dB).

    ``small_mask`` flags small cells; only those can carry range-extended
    users. Without it every cell is treated as eligible.
    """
    pilot = np.asarray(pilot_dbm, dtype=float)
    cio = np.asarray(cio_db, dtype=float)
    if pilot.size == 0:
        raise ValueError("attach needs at least one cell")
    if np.any(cio < 0):
        raise ValueError("cell individual offsets must be >= 0 dB")
    score = pilot + cio
    best = int(np.argmax(score))  # first maximum = lowest id
    tie = int(np.count_nonzero(score == score[best])) > 1
    natural = int(np.argmax(pilot))
    is_cre = natural != best
    if small_mask is not None:
        is_cre = is_cre and bool(np.asarray(small_mask)[best])
    return Attachment(best, bool(is_cre), tie)


def attach(point, layout: NetworkLayout, cio_db=None) -> Attachment:
    """Serving cell at ``point`` by the offset-biased best-pilot rule.

    ``is_cre`` marks a small-cell attachment that only exists because of
    the offset, i.e. the zero-offset best server is a different cell.
    """
    pilot = layout.pilot_dbm(point)[0]
    cio = layout.cio_vector(cio_db) if isinstance(cio_db, dict) or cio_db is None else np.asarray(cio_db, float)
    return attach_scores(pilot, cio, ~layout._arr("is_macro"))


def attach_many(pilot_dbm: np.ndarray, cio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised attachment for a ``(n_points, n_cells)`` pilot matrix.

    Returns serving cell and zero-offset best server per point.
    """
    return np.argmax(pilot_dbm + cio[None, :], axis=1), np.argmax(pilot_dbm, axis=1)


def single_small_cell_scenario(edge_fraction: float = 0.7, **overrides) -> ScenarioConfig:
    """One small cell on the boresight of sector 0, with the full interferer ring.

    The cell sits at ``edge_fraction`` of the way to the sector's far vertex.
    """
    reach = 2.0 * overrides.get("intersite_distance", 500.0) / 3.0
    return ScenarioConfig(small_positions=[(edge_fraction * reach, 0.0, 0)], **overrides)
