# api/services/radio.py
"""
Modèle de couche physique du réseau de desserte : gain d'antenne sectorielle,
affaiblissement UMi (LoS / NLoS), masquage log-normal corrélé, SINR par
cellule, SINR normalisé, débit MCS et détection des coupures.

Repère : x vers la droite, y vers le bas ; un azimut de 0° pointe vers +x et
90° vers +y. Les coordonnées des sites sont en mètres, la cellule (x, y) a
pour centre ((x + 0.5)·cs, (y + 0.5)·cs).
"""
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

if TYPE_CHECKING:
    from .gridworld import GridMap

logger = logging.getLogger(__name__)

BLACKOUT_THRESHOLD_DB = -8.47
SINR_MAX_DB = 25.0
THERMAL_NOISE_DBM_HZ = -174.0
PATTERN_MAX_ATTENUATION_DB = 30.0
VERTICAL_SIDELOBE_DB = 30.0

# Seuils CQI (dB) et efficacités spectrales (bit/s/Hz) ; le premier seuil est κ
DEFAULT_MCS_THRESHOLDS_DB = (
    -8.47, -6.7, -4.7, -2.3, 0.2, 2.4, 4.3, 5.9, 8.1, 10.3, 11.7, 14.1, 16.3, 18.7, 21.0,
)
DEFAULT_MCS_EFFICIENCIES = (
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
    2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)


@dataclass(frozen=True)
class Site:
    x_m: float
    y_m: float
    height_m: float = 35.0
    azimuth_offset_deg: float = 0.0


class Sector(NamedTuple):
    index: int
    site_index: int
    site: Site
    azimuth_deg: float


@dataclass(frozen=True)
class Deployment:
    """Déploiement multi-secteurs (section `radio` de la RunConfig)"""
    sites: Tuple[Site, ...] = ()
    sector_azimuths_deg: Tuple[float, ...] = (0.0, 120.0, 240.0)
    tx_power_dbm: float = 46.0
    carrier_ghz: float = 2.0
    bandwidth_hz: float = 10e6
    max_gain_dbi: float = 17.0
    downtilt_deg: float = 8.0
    h_beamwidth_deg: float = 65.0
    v_beamwidth_deg: float = 10.0
    agent_height_m: float = 1.5
    agent_antenna_gain_dbi: float = 0.0
    shadow_sigma_los_db: float = 10.0
    shadow_sigma_nlos_db: float = 10.0
    decorr_los_m: float = 37.0
    decorr_nlos_m: float = 50.0
    # conservé pour mémoire : n'intervient pas dans le SINR descendant
    bs_noise_fig_db: float = 5.0
    agent_noise_fig_db: float = 7.0
    wall_loss_db: float = 0.0
    blackout_threshold_db: float = BLACKOUT_THRESHOLD_DB
    sinr_max_db: float = SINR_MAX_DB
    mcs_thresholds_db: Tuple[float, ...] = DEFAULT_MCS_THRESHOLDS_DB
    mcs_efficiencies: Tuple[float, ...] = DEFAULT_MCS_EFFICIENCIES

    @property
    def noise_floor_dbm(self) -> float:
        return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(self.bandwidth_hz) + self.agent_noise_fig_db

    def resolved_sites(self, grid: 'GridMap') -> Tuple[Site, ...]:
        """Sites configurés, ou un site unique au centre de la carte"""
        if self.sites:
            return tuple(self.sites)
        return (Site(grid.width * grid.cell_size_m / 2.0, grid.height * grid.cell_size_m / 2.0),)

    def sectors(self, grid: 'GridMap') -> List[Sector]:
        sectors = []
        for site_index, site in enumerate(self.resolved_sites(grid)):
            for azimuth in self.sector_azimuths_deg:
                sectors.append(Sector(len(sectors), site_index, site, azimuth + site.azimuth_offset_deg))
        return sectors


@dataclass(frozen=True, eq=False)
class RadioMap:
    """Carte radio statique ; tableaux indexés [y, x], puissances indexées [secteur, y, x]"""
    rx_power_dbm: np.ndarray
    serving_sector: np.ndarray
    sinr_db: np.ndarray
    sinr_norm: np.ndarray
    rate_bps: np.ndarray
    passable: np.ndarray
    noise_floor_dbm: float
    blackout_threshold_db: float = BLACKOUT_THRESHOLD_DB
    sinr_max_db: float = SINR_MAX_DB

    def __post_init__(self):
        for name in ('rx_power_dbm', 'serving_sector', 'sinr_db', 'sinr_norm', 'rate_bps', 'passable'):
            getattr(self, name).setflags(write=False)

    @property
    def n_sectors(self) -> int:
        return self.rx_power_dbm.shape[0]

    @property
    def blackout(self) -> np.ndarray:
        return self.passable & is_blackout(self.sinr_db, self.blackout_threshold_db)

    def sinr_at(self, pos) -> float:
        return float(self.sinr_db[pos[1], pos[0]])

    def norm_at(self, pos) -> float:
        return float(self.sinr_norm[pos[1], pos[0]])

    def is_blackout_at(self, pos) -> bool:
        return bool(self.sinr_db[pos[1], pos[0]] < self.blackout_threshold_db)

    def summary(self) -> Dict[str, float]:
        values = self.sinr_db[self.passable]
        if values.size == 0:
            return {'passable_cells': 0}
        return {
            'passable_cells': int(values.size),
            'sinr_mean_db': float(values.mean()),
            'sinr_min_db': float(values.min()),
            'sinr_max_db': float(values.max()),
            'sinr_norm_mean': float(self.sinr_norm[self.passable].mean()),
            'blackout_cells': int(self.blackout.sum()),
            'blackout_fraction': float(self.blackout.sum() / values.size),
            'mean_rate_bps': float(self.rate_bps[self.passable].mean()),
            'noise_floor_dbm': float(self.noise_floor_dbm),
        }

    def rows(self) -> List[dict]:
        """Lignes d'export (x, y, sinr_db, sinr_norm, serving_sector, blackout) des cellules libres"""
        ys, xs = np.nonzero(self.passable)
        blackout = self.blackout
        return [
            {
                'x': int(x), 'y': int(y),
                'sinr_db': float(self.sinr_db[y, x]),
                'sinr_norm': float(self.sinr_norm[y, x]),
                'serving_sector': int(self.serving_sector[y, x]),
                'blackout': bool(blackout[y, x]),
            }
            for y, x in zip(ys, xs)
        ]


# ============================================================================
# FORMULES
# ============================================================================

def _wrap_degrees(angle):
    return (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0


def pattern_gain_db(deployment: Deployment, azimuth_deg: float, dx_m, dy_m, site_height_m: float):
    """Diagramme sectoriel 3GPP : A(φ, θ) = G_max − min(−[A_h(φ) + A_v(θ)], A_m)"""
    dx_m = np.asarray(dx_m, dtype=float)
    dy_m = np.asarray(dy_m, dtype=float)
    phi = _wrap_degrees(np.degrees(np.arctan2(dy_m, dx_m)) - azimuth_deg)
    distance_2d = np.hypot(dx_m, dy_m)
    theta = np.degrees(np.arctan2(site_height_m - deployment.agent_height_m, distance_2d))
    a_h = -np.minimum(12.0 * (phi / deployment.h_beamwidth_deg) ** 2, PATTERN_MAX_ATTENUATION_DB)
    a_v = -np.minimum(
        12.0 * ((theta - deployment.downtilt_deg) / deployment.v_beamwidth_deg) ** 2, VERTICAL_SIDELOBE_DB,
    )
    return deployment.max_gain_dbi - np.minimum(-(a_h + a_v), PATTERN_MAX_ATTENUATION_DB)


def path_loss_db(distance_3d_m, carrier_ghz: float, los):
    """
    Affaiblissement UMi en dB (avant masquage). La branche NLoS est bornée
    inférieurement par la branche LoS et par l'espace libre.
    """
    d = np.maximum(np.asarray(distance_3d_m, dtype=float), 1.0)
    log_f = math.log10(carrier_ghz)
    pl_los = 22.0 * np.log10(d) + 28.0 + 20.0 * log_f
    pl_nlos = 36.7 * np.log10(d) + 22.7 + 26.0 * log_f
    free_space = 20.0 * np.log10(d) + 20.0 * math.log10(carrier_ghz * 1e9) - 147.55
    pl_nlos = np.maximum(pl_nlos, np.maximum(pl_los, free_space))
    return np.where(los, pl_los, pl_nlos)


def _cell_center_m(cell, cell_size_m: float) -> Tuple[float, float]:
    return ((cell[0] + 0.5) * cell_size_m, (cell[1] + 0.5) * cell_size_m)


def antenna_gain(deployment: Deployment, sector: Sector, cell, cell_size_m: float = 1.0) -> float:
    cx, cy = _cell_center_m(cell, cell_size_m)
    return float(pattern_gain_db(
        deployment, sector.azimuth_deg, cx - sector.site.x_m, cy - sector.site.y_m, sector.site.height_m,
    ))


def path_loss(deployment: Deployment, sector: Sector, cell, los: bool, cell_size_m: float = 1.0,
              shadowing_db: float = 0.0) -> float:
    cx, cy = _cell_center_m(cell, cell_size_m)
    distance_2d = math.hypot(cx - sector.site.x_m, cy - sector.site.y_m)
    distance_3d = math.hypot(distance_2d, sector.site.height_m - deployment.agent_height_m)
    return float(path_loss_db(distance_3d, deployment.carrier_ghz, los)) + shadowing_db


def _ar1_filter(values: np.ndarray, rho: float, axis: int) -> np.ndarray:
    """Processus AR(1) stationnaire de variance unité le long d'un axe"""
    data = np.moveaxis(values, axis, -1).copy()
    innovation = math.sqrt(1.0 - rho ** 2)
    if innovation > 0:
        data[..., 0] /= innovation
    filtered = lfilter([innovation], [1.0, -rho], data, axis=-1)
    return np.moveaxis(filtered, -1, axis)


def shadowing_field(grid: 'GridMap', deployment: Deployment, seed: int, los: bool,
                    site_index: int = 0) -> np.ndarray:
    """
    Champ gaussien centré (dB) à autocorrélation exponentielle
    ρ(Δd) = exp(−Δd / d_corr) le long de chaque axe de la grille.
    """
    sigma = deployment.shadow_sigma_los_db if los else deployment.shadow_sigma_nlos_db
    if sigma == 0:
        return np.zeros((grid.height, grid.width))
    decorrelation = deployment.decorr_los_m if los else deployment.decorr_nlos_m
    rho = math.exp(-grid.cell_size_m / decorrelation)
    rng = np.random.default_rng([int(seed), int(site_index), int(bool(los))])
    white = rng.standard_normal((grid.height, grid.width))
    field = _ar1_filter(_ar1_filter(white, rho, axis=1), rho, axis=0)
    return sigma * field


def supercover_cells(origin, target) -> List[Tuple[int, int]]:
    """Toutes les cellules touchées par le segment entre deux centres de cellules (coins inclus)"""
    x, y = int(origin[0]), int(origin[1])
    x1, y1 = int(target[0]), int(target[1])
    dx, dy = x1 - x, y1 - y
    x_step = 1 if dx >= 0 else -1
    y_step = 1 if dy >= 0 else -1
    dx, dy = abs(dx), abs(dy)
    ddx, ddy = 2 * dx, 2 * dy
    cells = [(x, y)]
    if ddx >= ddy:
        error_prev = error = dx
        for _ in range(dx):
            x += x_step
            error += ddy
            if error > ddx:
                y += y_step
                error -= ddx
                if error + error_prev < ddx:
                    cells.append((x, y - y_step))
                elif error + error_prev > ddx:
                    cells.append((x - x_step, y))
                else:
                    cells.append((x, y - y_step))
                    cells.append((x - x_step, y))
            cells.append((x, y))
            error_prev = error
    else:
        error_prev = error = dy
        for _ in range(dy):
            y += y_step
            error += ddx
            if error > ddy:
                x += x_step
                error -= ddy
                if error + error_prev < ddy:
                    cells.append((x - x_step, y))
                elif error + error_prev > ddy:
                    cells.append((x, y - y_step))
                else:
                    cells.append((x - x_step, y))
                    cells.append((x, y - y_step))
            cells.append((x, y))
            error_prev = error
    return cells


def blocked_crossings(grid: 'GridMap', origin, cell) -> int:
    """Nombre de cellules bloquées traversées, cellule du site exclue"""
    count = 0
    cells = grid.cells
    for cx, cy in supercover_cells(origin, cell)[1:]:
        if 0 <= cx < grid.width and 0 <= cy < grid.height and cells[cy, cx]:
            count += 1
    return count


def line_of_sight(grid: 'GridMap', site_cell, cell) -> bool:
    return blocked_crossings(grid, site_cell, cell) == 0


def site_cell(grid: 'GridMap', site: Site) -> Tuple[int, int]:
    x = min(max(int(site.x_m // grid.cell_size_m), 0), grid.width - 1)
    y = min(max(int(site.y_m // grid.cell_size_m), 0), grid.height - 1)
    return (x, y)


def normalize_sinr(sinr_db, threshold_db: float = BLACKOUT_THRESHOLD_DB, sinr_max_db: float = SINR_MAX_DB):
    return np.clip((np.asarray(sinr_db, dtype=float) - threshold_db) / (sinr_max_db - threshold_db), 0.0, 1.0)


def mcs_rate(sinr_db, thresholds_db: Sequence[float] = DEFAULT_MCS_THRESHOLDS_DB,
             efficiencies: Sequence[float] = DEFAULT_MCS_EFFICIENCIES, bandwidth_hz: float = 10e6):
    """Débit (bit/s) constant par morceaux ; 0 sous le premier seuil"""
    sinr = np.asarray(sinr_db, dtype=float)
    index = np.searchsorted(np.asarray(thresholds_db, dtype=float), sinr, side='right') - 1
    table = np.asarray(efficiencies, dtype=float)
    rate = np.where(index >= 0, table[np.clip(index, 0, None)], 0.0) * bandwidth_hz
    if rate.ndim == 0:
        return float(rate)
    return rate


def is_blackout(sinr_db, threshold_db: float = BLACKOUT_THRESHOLD_DB):
    result = np.asarray(sinr_db) < threshold_db
    if result.ndim == 0:
        return bool(result)
    return result


def build_radio_map(grid: 'GridMap', deployment: Deployment, seed: int = 0) -> RadioMap:
    """
    Carte radio complète : P_rx = P_tx + G_ant − PL par secteur, secteur
    serveur, SINR avec interférence de tous les secteurs non serveurs, SINR
    normalisé et débit MCS.
    """
    sectors = deployment.sectors(grid)
    if not sectors:
        raise ValueError("le déploiement doit compter au moins un secteur")

    cs = grid.cell_size_m
    passable = grid.passable_mask.copy()
    ys, xs = np.mgrid[0:grid.height, 0:grid.width]
    centers_x = (xs + 0.5) * cs
    centers_y = (ys + 0.5) * cs
    free_ys, free_xs = np.nonzero(passable)

    rx_power = np.empty((len(sectors), grid.height, grid.width))
    for site_index, site in enumerate(deployment.resolved_sites(grid)):
        origin = site_cell(grid, site)
        walls = np.zeros((grid.height, grid.width), dtype=np.int32)
        for y, x in zip(free_ys.tolist(), free_xs.tolist()):
            walls[y, x] = blocked_crossings(grid, origin, (x, y))
        los = walls == 0

        dx = centers_x - site.x_m
        dy = centers_y - site.y_m
        distance_3d = np.hypot(np.hypot(dx, dy), site.height_m - deployment.agent_height_m)
        loss = np.where(
            los,
            path_loss_db(distance_3d, deployment.carrier_ghz, True)
            + shadowing_field(grid, deployment, seed, True, site_index),
            path_loss_db(distance_3d, deployment.carrier_ghz, False)
            + shadowing_field(grid, deployment, seed, False, site_index),
        ) + deployment.wall_loss_db * walls

        for sector in sectors:
            if sector.site_index != site_index:
                continue
            gain = pattern_gain_db(deployment, sector.azimuth_deg, dx, dy, site.height_m)
            rx_power[sector.index] = (
                deployment.tx_power_dbm + gain + deployment.agent_antenna_gain_dbi - loss
            )

    serving = np.argmax(rx_power, axis=0)
    linear = 10.0 ** (rx_power / 10.0)
    signal = np.take_along_axis(linear, serving[None], axis=0)[0]
    not_serving = np.arange(len(sectors))[:, None, None] != serving[None]
    interference = np.where(not_serving, linear, 0.0).sum(axis=0)
    noise_floor = deployment.noise_floor_dbm
    sinr_db = 10.0 * np.log10(signal / (interference + 10.0 ** (noise_floor / 10.0)))

    sinr_norm = normalize_sinr(sinr_db, deployment.blackout_threshold_db, deployment.sinr_max_db)
    sinr_norm = np.where(passable, sinr_norm, 0.0)
    rate = mcs_rate(
        sinr_db, deployment.mcs_thresholds_db, deployment.mcs_efficiencies, deployment.bandwidth_hz,
    )

    radio = RadioMap(
        rx_power_dbm=rx_power,
        serving_sector=serving,
        sinr_db=sinr_db,
        sinr_norm=sinr_norm,
        rate_bps=rate,
        passable=passable,
        noise_floor_dbm=noise_floor,
        blackout_threshold_db=deployment.blackout_threshold_db,
        sinr_max_db=deployment.sinr_max_db,
    )
    logger.debug(f"Carte radio {grid.name or grid.width}x{grid.height} : {radio.summary()}")
    return radio
