# api/services/bench.py
"""
Banc d'essai : planification priorisée classique (A* espace-temps), oracle
BFS sur l'état conjoint pour les petites instances, campagnes Monte-Carlo de
la politique apprise et comparaison appariée avec / sans perception réseau.
"""
import heapq
import itertools
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .exceptions import PlacementError, ScenarioFormatError, SimulationError
from .gridworld import GridMap, MapfEnvironment, generate_map, validate_trajectories
from .movingai import Scenario, scenario_agents
from .neural import NetworkParams
from .orchestrator import GreedyPolicy, run_episode
from .pathfind import NEIGHBOR_OFFSETS, bfs_distance_field
from .radio import Deployment, RadioMap, Site, build_radio_map, is_blackout

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]
VARIANTS = ('learned', 'prioritized')
AGGREGATED_METRICS = ('makespan', 'sum_of_costs', 'mean_sinr_db', 'blackout_steps', 'wall_clock_s')
MOVES = tuple(NEIGHBOR_OFFSETS) + ((0, 0),)


@dataclass(frozen=True)
class BenchConfig:
    """Section `bench` de la RunConfig"""
    n_runs: int = 50
    agent_counts: Tuple[int, ...] = (2, 4, 8)
    max_steps: int = 300
    confidence: float = 0.95
    baseline_max_restarts: int = 10
    compare_episodes: int = 200


class BaselineResult(NamedTuple):
    success: bool
    paths: List[List[Cell]]
    makespan: int
    sum_of_costs: int
    failed_agents: List[int]
    order: List[int]
    attempts: int

    def joint_history(self) -> List[Tuple[Cell, ...]]:
        """Positions conjointes t = 0..makespan, chaque agent restant sur son objectif"""
        horizon = max((len(p) for p in self.paths), default=1)
        return [
            tuple(p[min(t, len(p) - 1)] for p in self.paths)
            for t in range(horizon)
        ]


class JointSearchResult(NamedTuple):
    found: bool
    makespan: Optional[int]
    expanded: int
    exhausted: bool


# ============================================================================
# PLANIFICATION PRIORISÉE
# ============================================================================

class _Reservations:
    """Contraintes laissées par les agents déjà planifiés"""

    def __init__(self):
        self.vertices = set()
        self.edges = set()
        self.parked: Dict[Cell, int] = {}
        self.last_seen: Dict[Cell, int] = {}
        self.horizon = 0

    def occupied(self, cell: Cell, t: int) -> bool:
        if (cell, t) in self.vertices:
            return True
        since = self.parked.get(cell)
        return since is not None and t >= since

    def reserve(self, path: Sequence[Cell]):
        for t, cell in enumerate(path):
            self.vertices.add((cell, t))
            self.last_seen[cell] = max(self.last_seen.get(cell, -1), t)
            if t:
                previous = path[t - 1]
                if previous != cell:
                    self.edges.add((previous, cell, t - 1))
        self.parked[path[-1]] = len(path) - 1
        self.horizon = max(self.horizon, len(path))


def space_time_astar(grid: GridMap, start: Cell, goal: Cell, reservations: _Reservations,
                     horizon: int, distance: Optional[np.ndarray] = None) -> Optional[List[Cell]]:
    """
    A* dans (cellule, temps). L'agent ne peut s'arrêter sur son objectif que
    si aucun agent déjà planifié ne le traverse plus tard. Au-delà du dernier
    instant réservé, le temps n'est plus discriminant et l'état est replié.
    """
    distance = bfs_distance_field(grid, goal) if distance is None else distance
    if not np.isfinite(distance[start[1], start[0]]) or reservations.occupied(start, 0):
        return None
    settle = reservations.horizon
    last_goal_use = reservations.last_seen.get(goal, -1)

    counter = itertools.count()
    heap = [(float(distance[start[1], start[0]]), 0, next(counter), start)]
    parent = {(start, 0): None}
    closed = set()
    while heap:
        _, t, _, cell = heapq.heappop(heap)
        key = (cell, min(t, settle))
        if key in closed:
            continue
        closed.add(key)
        if cell == goal and t > last_goal_use and not reservations.occupied(goal, t):
            path = []
            node = (cell, t)
            while node is not None:
                path.append(node[0])
                node = parent[node]
            return path[::-1]
        if t >= horizon:
            continue
        for dx, dy in MOVES:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not grid.is_passable(nxt):
                continue
            h = distance[nxt[1], nxt[0]]
            if not np.isfinite(h):
                continue
            nt = t + 1
            if reservations.occupied(nxt, nt) or (nxt, cell, t) in reservations.edges:
                continue
            if (nxt, min(nt, settle)) in closed or (nxt, nt) in parent:
                continue
            parent[(nxt, nt)] = (cell, t)
            heapq.heappush(heap, (nt + float(h), nt, next(counter), nxt))
    return None


def _plan_in_order(grid: GridMap, starts, goals, order, horizon, fields):
    reservations = _Reservations()
    paths: List[Optional[List[Cell]]] = [None] * len(starts)
    for agent in order:
        path = space_time_astar(grid, starts[agent], goals[agent], reservations, horizon, fields[agent])
        if path is None:
            return paths, agent
        paths[agent] = path
        reservations.reserve(path)
    return paths, None


def prioritized_baseline(grid: GridMap, starts: Sequence[Cell], goals: Sequence[Cell],
                         order: Optional[Sequence[int]] = None, horizon: Optional[int] = None,
                         max_restarts: int = 10, seed: int = 0) -> BaselineResult:
    """
    Planification séquentielle : chaque agent évite les sommets, arêtes et
    objectifs occupés des agents précédents. En cas d'échec, l'ordre est
    inversé puis permuté aléatoirement (max_restarts essais au total).
    """
    starts = [tuple(s) for s in starts]
    goals = [tuple(g) for g in goals]
    n = len(starts)
    if n != len(goals):
        raise PlacementError("autant de départs que d'objectifs sont requis")
    if len(set(starts)) != n or len(set(goals)) != n:
        raise PlacementError("départs et objectifs doivent être distincts")
    for cell in starts + goals:
        if not grid.is_passable(cell):
            raise PlacementError(f"la cellule {cell} n'est pas franchissable")

    horizon = horizon or int(grid.passable_mask.sum()) * max(n, 1)
    fields = [bfs_distance_field(grid, g) for g in goals]
    base = list(order) if order is not None else list(range(n))
    rng = np.random.default_rng(seed)
    orders = [base, base[::-1]] + [[base[i] for i in rng.permutation(n)] for _ in range(max(max_restarts - 2, 0))]
    unique = list(dict.fromkeys(tuple(o) for o in orders))[:max(max_restarts, 1)]

    paths, failed = [None] * n, None
    for attempt, current in enumerate(unique, start=1):
        paths, failed = _plan_in_order(grid, starts, goals, current, horizon, fields)
        if failed is None:
            arrivals = [len(p) - 1 for p in paths]
            return BaselineResult(True, paths, max(arrivals, default=0), sum(arrivals), [], list(current), attempt)
        logger.debug(f"Ordre {list(current)} : échec de l'agent {failed}")

    planned = [p if p is not None else [s] for p, s in zip(paths, starts)]
    return BaselineResult(False, planned, horizon, 0, [failed], list(unique[-1]), len(unique))


# ============================================================================
# ORACLE BFS CONJOINT
# ============================================================================

def _legal_joint_move(current: Tuple[Cell, ...], nxt: Tuple[Cell, ...]) -> bool:
    if len(set(nxt)) != len(nxt):
        return False
    for i in range(len(nxt)):
        for j in range(i + 1, len(nxt)):
            if nxt[i] == current[j] and nxt[j] == current[i]:
                return False
    return True


def joint_state_bfs(grid: GridMap, starts: Sequence[Cell], goals: Sequence[Cell],
                    max_states: int = 2_000_000) -> JointSearchResult:
    """Makespan optimal par BFS sur l'état conjoint, règles de `validate_trajectories`"""
    start = tuple(tuple(s) for s in starts)
    goal = tuple(tuple(g) for g in goals)
    if start == goal:
        return JointSearchResult(True, 0, 0, False)
    options = {}
    for y, x in zip(*np.nonzero(grid.passable_mask)):
        cell = (int(x), int(y))
        options[cell] = [(cell[0] + dx, cell[1] + dy) for dx, dy in MOVES
                         if grid.is_passable((cell[0] + dx, cell[1] + dy))]

    frontier = deque([(start, 0)])
    seen = {start}
    expanded = 0
    while frontier:
        state, depth = frontier.popleft()
        expanded += 1
        for nxt in itertools.product(*(options[c] for c in state)):
            if nxt in seen or not _legal_joint_move(state, nxt):
                continue
            if nxt == goal:
                return JointSearchResult(True, depth + 1, expanded, False)
            if len(seen) >= max_states:
                return JointSearchResult(False, None, expanded, True)
            seen.add(nxt)
            frontier.append((nxt, depth + 1))
    return JointSearchResult(False, None, expanded, False)


# ============================================================================
# CAMPAGNES
# ============================================================================

@dataclass
class BenchReport:
    rows: List[dict]
    aggregates: List[dict]
    meta: dict = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.rows)

    def write(self, out_dir, stem: str = 'bench') -> Tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f'{stem}.csv'
        json_path = out_dir / f'{stem}.json'
        self.frame().to_csv(csv_path, index=False)
        json_path.write_text(
            json.dumps({'meta': self.meta, 'aggregates': self.aggregates}, indent=2, default=float),
            encoding='utf-8',
        )
        logger.info(f"Rapport écrit : {csv_path} et {json_path}")
        return csv_path, json_path


def mean_confidence(values: Sequence[float], confidence: float = 0.95) -> Tuple[float, float, float]:
    """Moyenne et intervalle de Student ; intervalle dégénéré si n < 2 ou variance nulle"""
    data = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=float)
    if data.size == 0:
        return float('nan'), float('nan'), float('nan')
    mean = float(data.mean())
    if data.size < 2:
        return mean, mean, mean
    sem = float(stats.sem(data))
    if sem == 0:
        return mean, mean, mean
    low, high = stats.t.interval(confidence, df=data.size - 1, loc=mean, scale=sem)
    return mean, float(low), float(high)


def aggregate(rows: Sequence[dict], confidence: float = 0.95) -> List[dict]:
    if not rows:
        return []
    frame = pd.DataFrame.from_records(rows)
    aggregates = []
    for (variant, n_agents), group in frame.groupby(['variant', 'n_agents'], sort=True):
        entry = {
            'variant': variant,
            'n_agents': int(n_agents),
            'n_runs': int(len(group)),
            'success_rate': float(group['success'].astype(bool).mean()),
        }
        for metric in AGGREGATED_METRICS:
            mean, low, high = mean_confidence(group[metric].tolist(), confidence)
            entry[f'{metric}_mean'] = mean
            entry[f'{metric}_ci_low'] = low
            entry[f'{metric}_ci_high'] = high
        aggregates.append(entry)
    return aggregates


def _radio_statistics(radio: Optional[RadioMap], history: Sequence[Sequence[Cell]]) -> Tuple[float, int]:
    """SINR moyen et coupures par agent-pas, positions atteintes après chaque pas"""
    if radio is None or len(history) < 2:
        return float('nan'), 0
    values = np.array([radio.sinr_at(pos) for positions in history[1:] for pos in positions])
    return float(values.mean()), int(is_blackout(values, radio.blackout_threshold_db).sum())


def _run_agents(scenarios: Sequence[Scenario], n_agents: int, run: int, seed: int, grid: GridMap):
    if (run + 1) * n_agents <= len(scenarios):
        return scenario_agents(scenarios, n_agents, run * n_agents, grid)
    rng = np.random.default_rng([seed, n_agents, run])
    for _ in range(50):
        picked = [scenarios[i] for i in rng.choice(len(scenarios), size=n_agents, replace=False)]
        starts = [s.start for s in picked]
        goals = [s.goal for s in picked]
        if len(set(starts)) == n_agents and len(set(goals)) == n_agents:
            return starts, goals
    raise ScenarioFormatError(f"impossible de tirer {n_agents} départs / objectifs distincts du scénario")


def _episode_row(variant, grid, n_agents, run, seed, success, makespan, soc, radio, history,
                 started, violations=0) -> dict:
    sinr, blackouts = _radio_statistics(radio, history)
    return {
        'variant': variant,
        'map': grid.name,
        'n_agents': n_agents,
        'run': run,
        'seed': seed,
        'success': bool(success),
        'makespan': int(makespan),
        'sum_of_costs': int(soc),
        'mean_sinr_db': sinr,
        'blackout_steps': blackouts,
        'wall_clock_s': time.perf_counter() - started,
        'violations': int(violations),
    }


def run_learned(grid: GridMap, params: NetworkParams, starts, goals, max_steps: int, seed: int,
                config, radio: Optional[RadioMap] = None, observation=None) -> Tuple[MapfEnvironment, object]:
    env = MapfEnvironment(
        grid, radio, n_agents=len(starts), max_steps=max_steps, env_config=config.environment,
        obs_config=observation or config.observation, reward_config=config.reward,
    )
    summary = run_episode(env, GreedyPolicy(params), seed, starts, goals)
    return env, summary


def run_benchmark(grid: GridMap, scenarios: Sequence[Scenario], agent_counts: Sequence[int],
                  params: Optional[NetworkParams], config, n_runs: int = 50, seed: int = 0,
                  variants: Optional[Sequence[str]] = None, radio: Optional[RadioMap] = None,
                  max_steps: Optional[int] = None) -> BenchReport:
    """
    Campagne par nombre d'agents : le run r utilise les lignes
    [r·n, (r + 1)·n) du scénario, ou un tirage graine-dépendant au-delà.
    """
    bench = config.bench
    max_steps = max_steps or bench.max_steps
    variants = tuple(variants or (VARIANTS if params is not None else ('prioritized',)))
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise SimulationError(f"variantes inconnues : {unknown}")
    if 'learned' in variants and params is None:
        raise SimulationError("la variante `learned` exige un point de sauvegarde")
    too_many = [n for n in agent_counts if n > len(scenarios)]
    if too_many:
        raise ScenarioFormatError(
            f"{max(too_many)} agents demandés, le scénario ne contient que {len(scenarios)} lignes"
        )
    radio = radio or build_radio_map(grid, config.radio, seed=seed)

    rows = []
    for n_agents in agent_counts:
        for run in range(n_runs):
            run_seed = seed * 100_003 + n_agents * 1009 + run
            starts, goals = _run_agents(scenarios, n_agents, run, seed, grid)
            if 'learned' in variants:
                started = time.perf_counter()
                env, summary = run_learned(grid, params, starts, goals, max_steps, run_seed, config, radio)
                violations = validate_trajectories(grid, summary.history)
                if violations:
                    logger.error(f"Trajectoire apprise invalide (run {run}) : {violations[:3]}")
                arrivals = [t if t >= 0 else max_steps for t in env.arrival_times]
                rows.append(_episode_row(
                    'learned', grid, n_agents, run, run_seed, summary.success and not violations,
                    summary.makespan, sum(arrivals), radio, summary.history, started, len(violations),
                ))
            if 'prioritized' in variants:
                started = time.perf_counter()
                result = prioritized_baseline(
                    grid, starts, goals, horizon=max_steps,
                    max_restarts=bench.baseline_max_restarts, seed=run_seed,
                )
                history = result.joint_history() if result.success else [tuple(starts)]
                rows.append(_episode_row(
                    'prioritized', grid, n_agents, run, run_seed, result.success,
                    result.makespan if result.success else max_steps,
                    result.sum_of_costs if result.success else max_steps * n_agents,
                    radio, history, started,
                ))
        logger.info(f"Banc d'essai {grid.name} : {n_agents} agents, {n_runs} runs terminés")

    meta = {
        'map': grid.name,
        'width': grid.width,
        'height': grid.height,
        'agent_counts': list(agent_counts),
        'n_runs': n_runs,
        'seed': seed,
        'max_steps': max_steps,
        'variants': list(variants),
    }
    return BenchReport(rows, aggregate(rows, bench.confidence), meta)


# ============================================================================
# COMPARAISON AVEC / SANS PERCEPTION RÉSEAU
# ============================================================================

@dataclass(frozen=True)
class ComparisonScenario:
    """Carte, radio et tirage des placements d'une comparaison appariée"""
    grid: GridMap
    radio: RadioMap
    n_agents: int = 2
    max_steps: int = 100
    left_strip: Tuple[Cell, ...] = ()
    right_strip: Tuple[Cell, ...] = ()
    scenarios: Tuple[Scenario, ...] = ()

    def placements(self, seed: int) -> Tuple[List[Cell], List[Cell]]:
        """Agents pairs partant de la bande gauche vers la droite, impairs en sens inverse"""
        if self.scenarios:
            return _run_agents(self.scenarios, self.n_agents, seed, seed, self.grid)
        rng = np.random.default_rng(seed)
        n = self.n_agents
        from_left, from_right = (n + 1) // 2, n // 2
        left = [self.left_strip[i] for i in rng.choice(len(self.left_strip), size=n, replace=False)]
        right = [self.right_strip[i] for i in rng.choice(len(self.right_strip), size=n, replace=False)]
        starts, goals = [], []
        for i in range(n):
            k = i // 2
            if i % 2 == 0:
                starts.append(left[k])
                goals.append(right[from_right + k])
            else:
                starts.append(right[k])
                goals.append(left[from_left + k])
        return starts, goals


def coverage_hole_deployment(size: int = 24, cell_size_m: float = 10.0, wall_loss_db: float = 7.0) -> Deployment:
    """Deux sites d'angle orientés vers l'intérieur, sans masquage"""
    far = (size - 0.5) * cell_size_m
    near = 0.5 * cell_size_m
    return Deployment(
        sites=(Site(near, near, azimuth_offset_deg=45.0), Site(far, near, azimuth_offset_deg=135.0)),
        sector_azimuths_deg=(0.0,),
        shadow_sigma_los_db=0.0,
        shadow_sigma_nlos_db=0.0,
        wall_loss_db=wall_loss_db,
    )


def coverage_hole_scenario(size: int = 24, cell_size_m: float = 10.0, wall_loss_db: float = 7.0,
                           n_agents: int = 2, max_steps: int = 100,
                           deployment: Optional[Deployment] = None) -> ComparisonScenario:
    """
    Carte size x size dont le couloir central (plus court chemin entre les
    bandes gauche et droite) traverse un trou de couverture ; le détour par
    la rangée du haut reste couvert.
    """
    grid = generate_map('coverage_hole', size, size, seed=0, n_agents=n_agents, cell_size_m=cell_size_m)
    deployment = deployment or coverage_hole_deployment(size, cell_size_m, wall_loss_db)
    radio = build_radio_map(grid, deployment, seed=0)
    middle = size // 2
    rows = range(middle - 3, middle + 3)
    left = tuple((x, y) for x in range(0, 3) for y in rows)
    right = tuple((x, y) for x in range(size - 3, size) for y in rows)
    return ComparisonScenario(grid, radio, n_agents, max_steps, left, right)


def scenario_from_files(grid: GridMap, scenarios: Sequence[Scenario], config, n_agents: int = 2,
                        max_steps: Optional[int] = None, seed: int = 0) -> ComparisonScenario:
    radio = build_radio_map(grid, config.radio, seed=seed)
    return ComparisonScenario(
        grid, radio, n_agents, max_steps or config.bench.max_steps, scenarios=tuple(scenarios),
    )


def compare_network_awareness(aware_params: NetworkParams, unaware_params: NetworkParams, config,
                              scenario: Optional[ComparisonScenario] = None, n_episodes: Optional[int] = None,
                              seed: int = 0, aware_channel: bool = True) -> BenchReport:
    """
    Épisodes appariés (mêmes graines, mêmes placements) : la variante
    `aware` observe le canal réseau, la variante `unaware` le reçoit à zéro.
    aware_channel=False neutralise aussi le canal côté `aware` (comparaison nulle).
    """
    scenario = scenario or coverage_hole_scenario()
    n_episodes = n_episodes or config.bench.compare_episodes
    observations = {
        'aware': replace(config.observation, network_aware=aware_channel),
        'unaware': replace(config.observation, network_aware=False),
    }
    policies = {'aware': aware_params, 'unaware': unaware_params}

    rows = []
    for episode in range(n_episodes):
        episode_seed = seed * 100_003 + episode
        starts, goals = scenario.placements(episode_seed)
        for variant in ('aware', 'unaware'):
            started = time.perf_counter()
            env, summary = run_learned(
                scenario.grid, policies[variant], starts, goals, scenario.max_steps, episode_seed,
                config, scenario.radio, observations[variant],
            )
            arrivals = [t if t >= 0 else scenario.max_steps for t in env.arrival_times]
            rows.append(_episode_row(
                variant, scenario.grid, scenario.n_agents, episode, episode_seed, summary.success,
                summary.makespan, sum(arrivals), scenario.radio, summary.history, started,
                len(validate_trajectories(scenario.grid, summary.history)),
            ))

    frame = pd.DataFrame.from_records(rows)
    by_variant = {v: frame[frame['variant'] == v] for v in ('aware', 'unaware')}
    blackout = {v: int(g['blackout_steps'].sum()) for v, g in by_variant.items()}
    sinr = {v: float(g['mean_sinr_db'].mean()) for v, g in by_variant.items()}
    makespan = {v: float(g['makespan'].mean()) for v, g in by_variant.items()}
    deltas = {
        'makespan_delta': makespan['aware'] - makespan['unaware'],
        'mean_sinr_db_delta': sinr['aware'] - sinr['unaware'],
        'blackout_steps_delta': blackout['aware'] - blackout['unaware'],
        'blackout_reduction': (1.0 - blackout['aware'] / blackout['unaware']) if blackout['unaware'] else 0.0,
        'aware_blackout_steps': blackout['aware'],
        'unaware_blackout_steps': blackout['unaware'],
    }
    logger.info(
        f"Comparaison réseau sur {scenario.grid.name} ({n_episodes} épisodes) : "
        f"Δmakespan {deltas['makespan_delta']:+.2f}, ΔSINR {deltas['mean_sinr_db_delta']:+.2f} dB, "
        f"Δcoupures {deltas['blackout_steps_delta']:+d}"
    )
    meta = {
        'map': scenario.grid.name,
        'n_episodes': n_episodes,
        'n_agents': scenario.n_agents,
        'seed': seed,
        'max_steps': scenario.max_steps,
        'deltas': deltas,
    }
    return BenchReport(rows, aggregate(rows, config.bench.confidence), meta)
