# api/services/gridworld.py
"""
Environnement MAPF décentralisé : génération des cartes, cycle de vie d'un
épisode (réinitialisations qui provoquent des interblocages), résolution des
conflits par priorité et transition conjointe.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property
from pathlib import Path as FsPath
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from . import observe, reward
from .exceptions import (
    MapGenerationError, PlacementError, SimulationError, TerminalStateError,
)
from .pathfind import Path, astar, bfs_distance_field

if TYPE_CHECKING:
    from .radio import RadioMap

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

DEFAULT_WAREHOUSE_MAP = FsPath(__file__).resolve().parents[2] / 'data' / 'maps' / 'warehouse-161-63.map'
MAP_KINDS = ('random', 'room', 'warehouse', 'coverage_hole')


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


N_ACTIONS = len(Action)

# Repère grille : x vers la droite, y vers le bas (lignes MovingAI)
ACTION_DELTAS = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.STAY: (0, 0),
}


def apply_action(pos: Cell, action) -> Cell:
    dx, dy = ACTION_DELTAS[Action(action)]
    return (pos[0] + dx, pos[1] + dy)


@dataclass(frozen=True)
class EnvironmentConfig:
    """Paramètres de l'environnement (section `environment` de la RunConfig)"""
    swap_fraction: float = 1.0
    density: float = 0.2
    forbid_swaps: bool = True
    wall_bump_collision: bool = True
    room_min_side: int = 5
    max_map_retries: int = 10
    warehouse_map_path: str = ''
    cell_size_m: float = 1.0


@dataclass(frozen=True, eq=False)
class GridMap:
    """Grille d'occupation statique (1 = infranchissable), indexée cells[y, x]"""
    width: int
    height: int
    cells: np.ndarray
    cell_size_m: float = 1.0
    name: str = ''

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int8)
        if cells.size != self.width * self.height:
            raise SimulationError(
                f"la grille contient {cells.size} cellules, {self.width}x{self.height} attendues"
            )
        cells = cells.reshape(self.height, self.width)
        if not np.isin(cells, (0, 1)).all():
            raise SimulationError("les cellules doivent valoir 0 ou 1")
        if self.cell_size_m <= 0:
            raise SimulationError("cell_size_m doit être strictement positif")
        cells.setflags(write=False)
        object.__setattr__(self, 'cells', cells)

    @classmethod
    def from_rows(cls, rows: Sequence[str], cell_size_m: float = 1.0, name: str = '') -> 'GridMap':
        """Construit une carte à partir de lignes '.' (libre) / '@' (bloqué)"""
        cells = [[0 if glyph == '.' else 1 for glyph in row] for row in rows]
        return cls(len(rows[0]), len(rows), np.array(cells), cell_size_m, name)

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.cell_size_m == other.cell_size_m
            and np.array_equal(self.cells, other.cells)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.cell_size_m, self.cells.tobytes()))

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def is_passable(self, cell) -> bool:
        return self.in_bounds(cell) and self.cells[cell[1], cell[0]] == 0

    @property
    def blocked_count(self) -> int:
        return int(self.cells.sum())

    @property
    def passable_mask(self) -> np.ndarray:
        return self.cells == 0

    @cached_property
    def component_labels(self) -> np.ndarray:
        # structure par défaut de ndimage.label : 4-connexité
        labels, _ = ndimage.label(self.passable_mask)
        labels.setflags(write=False)
        return labels

    @cached_property
    def largest_component(self) -> np.ndarray:
        labels = self.component_labels
        if labels.max() == 0:
            return np.zeros_like(self.passable_mask)
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        mask = labels == int(np.argmax(sizes))
        mask.setflags(write=False)
        return mask

    def connected(self, a: Cell, b: Cell) -> bool:
        if not (self.is_passable(a) and self.is_passable(b)):
            return False
        labels = self.component_labels
        return labels[a[1], a[0]] == labels[b[1], b[0]]


@dataclass(frozen=True)
class AgentState:
    id: int
    pos: Cell
    start: Cell
    goal: Cell
    priority: float = 0.0

    @property
    def at_goal(self) -> bool:
        return self.pos == self.goal


@dataclass(frozen=True)
class EpisodeState:
    """Instantané complet d'un épisode ; les chemins et priorités sont des caches dérivés"""
    map: GridMap
    agents: Tuple[AgentState, ...]
    timestep: int
    max_steps: int
    rng_seed: int
    paths: Tuple[Optional[Path], ...] = ()
    distance_fields: Tuple[np.ndarray, ...] = field(default=(), repr=False)
    priorities: Tuple['observe.Priority', ...] = ()
    terminal: bool = False
    success: bool = False

    @property
    def positions(self) -> Tuple[Cell, ...]:
        return tuple(agent.pos for agent in self.agents)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def all_at_goal(self) -> bool:
        return all(agent.at_goal for agent in self.agents)


@dataclass(frozen=True)
class StepOutcome:
    executed: Tuple[Action, ...]
    collisions: Tuple[bool, ...]
    reached_goal: Tuple[bool, ...]
    path_conflicts: Tuple[bool, ...]
    terminal: bool
    success: bool


class StepResult(NamedTuple):
    state: EpisodeState
    outcome: StepOutcome
    observations: Tuple['observe.Observation', ...]
    rewards: Tuple[float, ...]


# ============================================================================
# GÉNÉRATION DES CARTES
# ============================================================================

def generate_map(kind: str, width: int, height: int, seed: int, density: float = 0.2,
                 n_agents: int = 2, config: Optional[EnvironmentConfig] = None,
                 cell_size_m: float = 1.0) -> GridMap:
    """
    Génère une carte déterministe pour (kind, seed).

    La plus grande composante libre doit contenir au moins 2 * n_agents
    cellules ; sinon la génération est relancée avec seed + 1.
    """
    config = config or EnvironmentConfig()
    if kind not in MAP_KINDS:
        raise MapGenerationError(f"type de carte inconnu : {kind!r} (attendu : {', '.join(MAP_KINDS)})")

    if kind == 'warehouse':
        from .movingai import load_map
        path = config.warehouse_map_path or DEFAULT_WAREHOUSE_MAP
        grid = load_map(path, cell_size_m=cell_size_m)
        _ensure_capacity(grid, n_agents)
        return grid

    if width < 4 or height < 4:
        raise MapGenerationError(f"dimensions {width}x{height} trop petites (minimum 4x4)")
    if not 0 <= density < 1:
        raise MapGenerationError(f"densité {density} hors de [0, 1)")

    for attempt in range(config.max_map_retries + 1):
        current_seed = seed + attempt
        rng = np.random.default_rng(current_seed)
        if kind == 'random':
            cells = (rng.random((height, width)) < density).astype(np.int8)
        elif kind == 'room':
            cells = _room_cells(width, height, rng, config.room_min_side)
        else:
            cells = _coverage_hole_cells(width, height)
        grid = GridMap(width, height, cells, cell_size_m, f"{kind}-{width}-{height}-{current_seed}")
        if int(grid.largest_component.sum()) >= 2 * n_agents:
            if attempt:
                logger.info(f"Carte {kind} régénérée avec la graine {current_seed} après {attempt} rejet(s)")
            return grid
        logger.warning(
            f"Carte {kind} (graine {current_seed}) : composante libre trop petite pour {n_agents} agents"
        )
    raise MapGenerationError(
        f"aucune carte {kind} {width}x{height} avec une composante de {2 * n_agents} cellules "
        f"après {config.max_map_retries + 1} tentatives"
    )


def _ensure_capacity(grid: GridMap, n_agents: int):
    if int(grid.largest_component.sum()) < 2 * n_agents:
        raise MapGenerationError(f"la carte {grid.name} ne peut pas accueillir {n_agents} agents")


def _room_cells(width: int, height: int, rng: np.random.Generator, min_side: int) -> np.ndarray:
    """
    Division récursive en pièces rectangulaires. Les murs sont posés sur des
    coordonnées impaires et les portes (1 cellule) sur des coordonnées paires,
    si bien qu'aucun mur ultérieur ne peut obstruer une porte.
    """
    cells = np.zeros((height, width), dtype=np.int8)
    regions = [(0, 0, width - 1, height - 1)]
    while regions:
        x0, y0, x1, y1 = regions.pop()
        region_w, region_h = x1 - x0 + 1, y1 - y0 + 1
        vertical = [x for x in range(x0 + min_side, x1 - min_side + 1) if x % 2 == 1]
        horizontal = [y for y in range(y0 + min_side, y1 - min_side + 1) if y % 2 == 1]
        if not vertical and not horizontal:
            continue
        split_vertical = bool(vertical) and (
            not horizontal or region_w > region_h or (region_w == region_h and rng.random() < 0.5)
        )
        if split_vertical:
            wall_x = int(rng.choice(vertical))
            cells[y0:y1 + 1, wall_x] = 1
            door_y = int(rng.choice([y for y in range(y0, y1 + 1) if y % 2 == 0]))
            cells[door_y, wall_x] = 0
            regions.append((x0, y0, wall_x - 1, y1))
            regions.append((wall_x + 1, y0, x1, y1))
        else:
            wall_y = int(rng.choice(horizontal))
            cells[wall_y, x0:x1 + 1] = 1
            door_x = int(rng.choice([x for x in range(x0, x1 + 1) if x % 2 == 0]))
            cells[wall_y, door_x] = 0
            regions.append((x0, y0, x1, wall_y - 1))
            regions.append((x0, wall_y + 1, x1, y1))
    return cells


def _coverage_hole_cells(width: int, height: int, margin: int = 3) -> np.ndarray:
    """Bloc central traversé par un couloir horizontal de 2 cellules, contournable par les bords"""
    cells = np.zeros((height, width), dtype=np.int8)
    cells[margin:height - margin, margin:width - margin] = 1
    middle = height // 2
    cells[middle - 1:middle + 1, margin:width - margin] = 0
    return cells


# ============================================================================
# CYCLE DE VIE D'UN ÉPISODE
# ============================================================================

def initial_state(grid: GridMap, starts: Sequence[Cell], goals: Sequence[Cell],
                  max_steps: int, seed: int = 0) -> EpisodeState:
    """État t = 0 pour des départs / objectifs explicites"""
    starts = [tuple(int(v) for v in s) for s in starts]
    goals = [tuple(int(v) for v in g) for g in goals]
    if len(starts) != len(goals):
        raise PlacementError("autant de départs que d'objectifs sont requis")
    if len(set(starts)) != len(starts):
        raise PlacementError("les départs doivent être distincts")
    if len(set(goals)) != len(goals):
        raise PlacementError("les objectifs doivent être distincts")
    for cell in starts + goals:
        if not grid.is_passable(cell):
            raise PlacementError(f"la cellule {cell} n'est pas franchissable")

    fields = tuple(bfs_distance_field(grid, goal) for goal in goals)
    agents = tuple(
        AgentState(i, start, start, goal, float(fields[i][start[1], start[0]]))
        for i, (start, goal) in enumerate(zip(starts, goals))
    )
    paths = tuple(astar(grid, start, goal) for start, goal in zip(starts, goals))
    state = EpisodeState(
        map=grid, agents=agents, timestep=0, max_steps=max_steps, rng_seed=seed,
        paths=paths, distance_fields=fields,
    )
    state = replace(state, priorities=observe.compute_priorities(state))
    if state.all_at_goal:
        state = replace(state, terminal=True, success=True)
    return state


def reset_episode(grid: GridMap, n_agents: int, seed: int, swap_fraction: float = 1.0,
                  max_steps: int = 200) -> EpisodeState:
    """
    Tire départs et objectifs dans la plus grande composante libre.

    Les premiers agents sont appariés deux à deux (départ de A = objectif de B
    et inversement) pour une part swap_fraction des agents ; les autres
    reçoivent un départ et un objectif indépendants.
    """
    if n_agents < 1:
        raise PlacementError("au moins un agent est requis")
    if not 0.0 <= swap_fraction <= 1.0:
        raise PlacementError(f"swap_fraction {swap_fraction} hors de [0, 1]")

    n_swapped = int(round(swap_fraction * n_agents))
    if n_swapped % 2:
        if swap_fraction == 1.0:
            raise PlacementError(
                f"un échange complet des objectifs exige un nombre pair d'agents (reçu {n_agents})"
            )
        n_swapped -= 1

    ys, xs = np.nonzero(grid.largest_component)
    candidates = list(zip(xs.tolist(), ys.tolist()))
    needed = n_swapped + 2 * (n_agents - n_swapped)
    if len(candidates) < needed:
        raise PlacementError(
            f"la plus grande composante libre compte {len(candidates)} cellules, "
            f"{needed} sont nécessaires pour {n_agents} agents distincts"
        )

    rng = np.random.default_rng(seed)
    picked = [candidates[i] for i in rng.choice(len(candidates), size=needed, replace=False)]
    starts, goals = [], []
    for pair in range(n_swapped // 2):
        a, b = picked[2 * pair], picked[2 * pair + 1]
        starts.extend([a, b])
        goals.extend([b, a])
    rest = picked[n_swapped:]
    for i in range(n_agents - n_swapped):
        starts.append(rest[2 * i])
        goals.append(rest[2 * i + 1])
    return initial_state(grid, starts, goals, max_steps, seed)


# ============================================================================
# RÉSOLUTION DES CONFLITS
# ============================================================================

class _Resolution(NamedTuple):
    actions: Tuple[Action, ...]
    demoted: Tuple[bool, ...]
    illegal: Tuple[bool, ...]
    winners: Tuple[bool, ...]


def _resolve(grid: GridMap, positions: Sequence[Cell], proposed: Sequence, ranks: Sequence[int],
             forbid_swaps: bool = True) -> _Resolution:
    n = len(positions)
    actions = [Action(a) for a in proposed]
    illegal = [False] * n
    demoted = [False] * n
    winners = [False] * n
    targets = []
    for i, (pos, action) in enumerate(zip(positions, actions)):
        target = apply_action(pos, action)
        if not grid.is_passable(target):
            illegal[i] = action != Action.STAY
            actions[i] = Action.STAY
            target = pos
        targets.append(target)

    def stay(i):
        actions[i] = Action.STAY
        targets[i] = positions[i]
        demoted[i] = True

    # point fixe : chaque passe rétrograde au moins un agent ou s'arrête
    while True:
        movers = [i for i in range(n) if targets[i] != positions[i]]
        held = {positions[i] for i in range(n) if targets[i] == positions[i]}
        blocked = [i for i in movers if targets[i] in held]
        if blocked:
            for i in blocked:
                stay(i)
            continue

        claims = {}
        for i in movers:
            claims.setdefault(targets[i], []).append(i)
        contested = [group for group in claims.values() if len(group) > 1]
        if contested:
            for group in contested:
                best = min(group, key=lambda j: ranks[j])
                winners[best] = True
                for j in group:
                    if j != best:
                        stay(j)
            continue

        if forbid_swaps:
            occupant = {positions[i]: i for i in range(n)}
            swapped = False
            for i in movers:
                j = occupant.get(targets[i])
                if j is not None and j != i and targets[j] == positions[i] and targets[i] != positions[i]:
                    loser = i if ranks[i] > ranks[j] else j
                    winners[j if loser == i else i] = True
                    stay(loser)
                    swapped = True
                    break
            if swapped:
                continue
        break

    return _Resolution(tuple(actions), tuple(demoted), tuple(illegal), tuple(winners))


def resolve_conflicts(state: EpisodeState, proposed: Sequence, priorities=None,
                      forbid_swaps: bool = True) -> Tuple[Action, ...]:
    """
    Action conjointe légale : ni cellule cible partagée, ni échange de
    cellules, ni cible bloquée. Toute rétrogradation remplace le mouvement par
    `stay` ; la résolution est itérée jusqu'à un point fixe.
    """
    priorities = priorities if priorities is not None else state.priorities
    if len(proposed) != state.n_agents:
        raise SimulationError(f"{len(proposed)} actions pour {state.n_agents} agents")
    ranks = [p.rank for p in priorities]
    return _resolve(state.map, state.positions, proposed, ranks, forbid_swaps).actions


# ============================================================================
# TRANSITION
# ============================================================================

def step(state: EpisodeState, joint_action: Sequence, radio: Optional['RadioMap'] = None,
         env_config: Optional[EnvironmentConfig] = None,
         obs_config: Optional['observe.ObservationConfig'] = None,
         reward_config: Optional['reward.RewardConfig'] = None) -> StepResult:
    """Applique une action conjointe et renvoie (état', issue, observations', récompenses)"""
    if state.terminal:
        raise TerminalStateError(f"épisode terminé au pas {state.timestep}")
    if len(joint_action) != state.n_agents:
        raise SimulationError(f"{len(joint_action)} actions pour {state.n_agents} agents")
    env_config = env_config or EnvironmentConfig()
    obs_config = obs_config or observe.ObservationConfig()
    reward_config = reward_config or reward.RewardConfig()

    ranks = [p.rank for p in state.priorities]
    resolution = _resolve(state.map, state.positions, joint_action, ranks, env_config.forbid_swaps)
    new_positions = [apply_action(pos, a) for pos, a in zip(state.positions, resolution.actions)]

    collisions = []
    for i in range(state.n_agents):
        collided = resolution.demoted[i] or (env_config.wall_bump_collision and resolution.illegal[i])
        if reward_config.penalize_both and resolution.winners[i]:
            collided = True
        collisions.append(collided)

    # les intentions pénalisées sont celles communiquées au pas t
    path_conflicts = []
    for i in range(state.n_agents):
        conflict = False
        for j in observe.intention_senders(state, i, radio, obs_config):
            if new_positions[i] in observe.intention_cells(state, j, obs_config):
                conflict = True
                break
        path_conflicts.append(conflict)

    agents, paths, reached = [], [], []
    for agent, new_pos, old_path in zip(state.agents, new_positions, state.paths):
        distance = float(state.distance_fields[agent.id][new_pos[1], new_pos[0]])
        agents.append(replace(agent, pos=new_pos, priority=distance))
        reached.append(not agent.at_goal and new_pos == agent.goal)
        path = old_path.advance_to(new_pos) if old_path is not None else None
        if path is None and np.isfinite(distance):
            path = astar(state.map, new_pos, agent.goal)
        paths.append(path)

    timestep = state.timestep + 1
    next_state = replace(state, agents=tuple(agents), paths=tuple(paths), timestep=timestep)
    next_state = replace(next_state, priorities=observe.compute_priorities(next_state))
    success = next_state.all_at_goal
    terminal = success or timestep >= state.max_steps
    next_state = replace(next_state, terminal=terminal, success=success)

    rewards = []
    for i, (old, new) in enumerate(zip(state.agents, next_state.agents)):
        sinr_norm = radio.norm_at(new.pos) if radio is not None else 1.0
        context = reward.RewardContext(
            reached_goal=reached[i],
            collision=collisions[i],
            path_conflict=path_conflicts[i],
            distance_before=old.priority,
            distance_after=new.priority,
            sinr_norm=sinr_norm,
        )
        rewards.append(reward.compute_reward(context, reward_config))

    outcome = StepOutcome(
        executed=resolution.actions,
        collisions=tuple(collisions),
        reached_goal=tuple(reached),
        path_conflicts=tuple(path_conflicts),
        terminal=terminal,
        success=success,
    )
    observations = observe.build_all(next_state, radio, obs_config)
    return StepResult(next_state, outcome, observations, tuple(rewards))


def validate_trajectories(grid: GridMap, history: Sequence[Sequence[Cell]]) -> List[str]:
    """
    Contrôle indépendant d'une suite de positions conjointes : cellules
    franchissables, aucun partage de cellule, déplacements unitaires et aucun
    échange. Renvoie la liste des violations (vide si valide).
    """
    violations = []
    for t, positions in enumerate(history):
        for i, pos in enumerate(positions):
            if not grid.is_passable(tuple(pos)):
                violations.append(f"t={t} agent {i} sur une cellule interdite {tuple(pos)}")
        if len(set(map(tuple, positions))) != len(positions):
            violations.append(f"t={t} conflit de sommet")
        if t == 0:
            continue
        previous = history[t - 1]
        for i, (a, b) in enumerate(zip(previous, positions)):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) > 1:
                violations.append(f"t={t} agent {i} saute de {tuple(a)} à {tuple(b)}")
        for i in range(len(positions)):
            for j in range(i + 1, len(positions)):
                if (tuple(positions[i]) == tuple(previous[j]) and tuple(positions[j]) == tuple(previous[i])
                        and tuple(positions[i]) != tuple(positions[j])):
                    violations.append(f"t={t} échange entre les agents {i} et {j}")
    return violations


class MapfEnvironment:
    """Enveloppe à état d'un épisode, utilisée par les acteurs, l'évaluation et les bancs d'essai"""

    def __init__(self, grid: GridMap, radio: Optional['RadioMap'] = None, n_agents: int = 2,
                 max_steps: int = 200, env_config: Optional[EnvironmentConfig] = None,
                 obs_config: Optional['observe.ObservationConfig'] = None,
                 reward_config: Optional['reward.RewardConfig'] = None):
        self.grid = grid
        self.radio = radio
        self.n_agents = n_agents
        self.max_steps = max_steps
        self.env_config = env_config or EnvironmentConfig()
        self.obs_config = obs_config or observe.ObservationConfig()
        self.reward_config = reward_config or reward.RewardConfig()
        self.state: Optional[EpisodeState] = None
        self.history: List[Tuple[Cell, ...]] = []
        self.arrival_times: List[int] = []

    def reset(self, seed: int, starts: Optional[Sequence[Cell]] = None,
              goals: Optional[Sequence[Cell]] = None) -> Tuple['observe.Observation', ...]:
        if starts is not None:
            self.state = initial_state(self.grid, starts, goals, self.max_steps, seed)
        else:
            self.state = reset_episode(
                self.grid, self.n_agents, seed, self.env_config.swap_fraction, self.max_steps
            )
        self.history = [self.state.positions]
        self.arrival_times = [0 if agent.at_goal else -1 for agent in self.state.agents]
        return self.observations()

    def observations(self) -> Tuple['observe.Observation', ...]:
        return observe.build_all(self.state, self.radio, self.obs_config)

    def step(self, actions: Sequence) -> StepResult:
        result = step(
            self.state, actions, self.radio, self.env_config, self.obs_config, self.reward_config,
        )
        self.state = result.state
        self.history.append(self.state.positions)
        for i, agent in enumerate(self.state.agents):
            if not agent.at_goal:
                self.arrival_times[i] = -1
            elif self.arrival_times[i] < 0:
                self.arrival_times[i] = self.state.timestep
        return result

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.terminal
