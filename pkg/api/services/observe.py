# api/services/observe.py
"""
Priorités dynamiques et observation asymétrique : tenseur spatial 4 x V x V
(obstacles, agents, intentions communiquées, qualité réseau) et vecteur
stratégique (objectif relatif rapporté à la diagonale de la carte, drapeau
d'arrivée, points de passage A*).
"""
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from .pathfind import next_waypoints

if TYPE_CHECKING:
    from .gridworld import EpisodeState
    from .radio import RadioMap

logger = logging.getLogger(__name__)

N_CHANNELS = 4
OBSTACLE_CHANNEL, AGENT_CHANNEL, INTENTION_CHANNEL, NETWORK_CHANNEL = range(N_CHANNELS)


@dataclass(frozen=True)
class ObservationConfig:
    """Section `observation` de la RunConfig"""
    fov_radius: int = 7
    waypoint_steps: int = 5
    communicated_steps: int = 5
    comm_range_factor: float = 2.0
    network_aware: bool = True
    blackout_blocks_comm: bool = False

    @property
    def view_size(self) -> int:
        return 2 * self.fov_radius + 1

    @property
    def comm_range(self) -> float:
        return self.comm_range_factor * self.fov_radius

    @property
    def vector_size(self) -> int:
        return 3 + 2 * self.waypoint_steps


@dataclass(frozen=True)
class Priority:
    value: float
    demoted: bool
    rank: int


@dataclass(frozen=True)
class Observation:
    spatial: np.ndarray
    vector: np.ndarray


def compute_priorities(state: 'EpisodeState') -> Tuple[Priority, ...]:
    """
    Ordre total strict : distance A* croissante, agents arrivés rétrogradés
    sous tous les autres, égalités départagées par identifiant croissant.
    """
    keyed = []
    for agent in state.agents:
        demoted = agent.at_goal
        value = float(agent.priority)
        keyed.append(((demoted, np.inf if demoted else value, agent.id), value, demoted))
    order = sorted(range(len(keyed)), key=lambda i: keyed[i][0])
    ranks = [0] * len(keyed)
    for rank, i in enumerate(order):
        ranks[i] = rank
    return tuple(Priority(keyed[i][1], keyed[i][2], ranks[i]) for i in range(len(keyed)))


def _chebyshev(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def intention_cells(state: 'EpisodeState', sender: int, config: ObservationConfig) -> List[Tuple[int, int]]:
    """Prochaines cellules du chemin A* de l'émetteur, cellule courante exclue"""
    path = state.paths[sender] if state.paths else None
    if path is None:
        return []
    idx = path.index_of(state.agents[sender].pos)
    if idx < 0:
        return []
    return list(path.cells[idx + 1: idx + 1 + config.communicated_steps])


def intention_senders(state: 'EpisodeState', receiver: int, radio: Optional['RadioMap'],
                      config: ObservationConfig) -> List[int]:
    """Agents de rang strictement supérieur à portée de communication du récepteur"""
    if not state.priorities:
        return []
    own = state.agents[receiver]
    own_rank = state.priorities[receiver].rank
    if config.blackout_blocks_comm and radio is not None and radio.is_blackout_at(own.pos):
        return []
    senders = []
    for other in state.agents:
        if other.id == receiver or state.priorities[other.id].rank >= own_rank:
            continue
        if _chebyshev(own.pos, other.pos) > config.comm_range:
            continue
        if config.blackout_blocks_comm and radio is not None and radio.is_blackout_at(other.pos):
            continue
        senders.append(other.id)
    return senders


def build_observation(state: 'EpisodeState', agent_id: int, radio: Optional['RadioMap'] = None,
                      paths: Optional[Sequence] = None,
                      config: Optional[ObservationConfig] = None) -> Observation:
    """Construit l'observation locale (asymétrique) de l'agent agent_id"""
    config = config or ObservationConfig()
    if paths is not None:
        state = replace(state, paths=tuple(paths))

    r = config.fov_radius
    size = config.view_size
    grid = state.map
    agent = state.agents[agent_id]
    x, y = agent.pos
    spatial = np.zeros((N_CHANNELS, size, size), dtype=np.float32)

    # fenêtre de la carte couverte par le champ de vision
    x0, x1 = max(0, x - r), min(grid.width, x + r + 1)
    y0, y1 = max(0, y - r), min(grid.height, y + r + 1)
    wx0, wy0 = x0 - (x - r), y0 - (y - r)
    wx1, wy1 = wx0 + (x1 - x0), wy0 + (y1 - y0)

    spatial[OBSTACLE_CHANNEL] = 1.0
    spatial[OBSTACLE_CHANNEL, wy0:wy1, wx0:wx1] = grid.cells[y0:y1, x0:x1]

    for other in state.agents:
        if other.id == agent_id:
            continue
        dx, dy = other.pos[0] - x, other.pos[1] - y
        if abs(dx) <= r and abs(dy) <= r:
            spatial[AGENT_CHANNEL, r + dy, r + dx] = 1.0

    for sender in intention_senders(state, agent_id, radio, config):
        for cx, cy in intention_cells(state, sender, config):
            dx, dy = cx - x, cy - y
            if abs(dx) <= r and abs(dy) <= r:
                spatial[INTENTION_CHANNEL, r + dy, r + dx] = 1.0

    if config.network_aware and radio is not None:
        spatial[NETWORK_CHANNEL, wy0:wy1, wx0:wx1] = radio.sinr_norm[y0:y1, x0:x1]

    gx, gy = agent.goal
    path = state.paths[agent_id] if state.paths else None
    if path is not None and path.index_of(agent.pos) >= 0:
        waypoints = next_waypoints(path, agent.pos, config.waypoint_steps)
    else:
        waypoints = [(gx - x, gy - y)] * config.waypoint_steps
    diagonal = float(np.hypot(grid.width, grid.height))
    vector = np.empty(config.vector_size, dtype=np.float32)
    vector[0] = (gx - x) / diagonal
    vector[1] = (gy - y) / diagonal
    vector[2] = 1.0 if agent.at_goal else 0.0
    vector[3:] = np.asarray(waypoints, dtype=np.float32).ravel()
    return Observation(spatial, vector)


def build_all(state: 'EpisodeState', radio: Optional['RadioMap'] = None,
              config: Optional[ObservationConfig] = None) -> Tuple[Observation, ...]:
    config = config or ObservationConfig()
    return tuple(build_observation(state, i, radio, config=config) for i in range(state.n_agents))


def stack_observations(observations: Sequence[Observation]) -> Tuple[np.ndarray, np.ndarray]:
    """Empile des observations en lots (N, C, V, V) et (N, D)"""
    spatial = np.stack([o.spatial for o in observations])
    vector = np.stack([o.vector for o in observations])
    return spatial, vector
