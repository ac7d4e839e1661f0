# api/tests/test_gridworld.py
import numpy as np
from django.test import SimpleTestCase

from api.services.exceptions import MapGenerationError, PlacementError, SimulationError, TerminalStateError
from api.services.gridworld import (
    Action, EnvironmentConfig, GridMap, MapfEnvironment, apply_action, generate_map, initial_state,
    reset_episode, resolve_conflicts, step, validate_trajectories,
)
from api.services.reward import RewardConfig

from .factories import TINY_OBSERVATION


def toward(pos, target):
    """Action qui mène de pos à la cellule voisine target"""
    delta = (target[0] - pos[0], target[1] - pos[1])
    for action in Action:
        if apply_action((0, 0), action) == delta:
            return action
    raise AssertionError(f"{pos} et {target} ne sont pas voisines")


def follow_paths(state):
    actions = []
    for agent, path in zip(state.agents, state.paths):
        if path is None or agent.at_goal or path.index_of(agent.pos) < 0 or path.length == 0:
            actions.append(Action.STAY)
            continue
        idx = path.index_of(agent.pos)
        actions.append(toward(agent.pos, path.cells[idx + 1]))
    return actions


class MapGenerationTests(SimpleTestCase):

    def test_same_seed_same_map(self):
        for kind in ('random', 'room', 'coverage_hole'):
            self.assertEqual(generate_map(kind, 20, 16, seed=4), generate_map(kind, 20, 16, seed=4))

    def test_dimensions(self):
        grid = generate_map('random', 12, 9, seed=0)
        self.assertEqual((grid.width, grid.height), (12, 9))
        self.assertEqual(grid.cells.shape, (9, 12))

    def test_too_small(self):
        with self.assertRaises(MapGenerationError):
            generate_map('random', 3, 10, seed=0)

    def test_unknown_kind(self):
        with self.assertRaises(MapGenerationError):
            generate_map('maze', 10, 10, seed=0)

    def test_room_maps_are_connected(self):
        for seed in range(10):
            grid = generate_map('room', 24, 24, seed=seed)
            self.assertGreater(grid.blocked_count, 0)
            self.assertEqual(int(grid.largest_component.sum()), int(grid.passable_mask.sum()))

    def test_capacity_for_agents(self):
        grid = generate_map('random', 8, 8, seed=2, density=0.3, n_agents=4)
        self.assertGreaterEqual(int(grid.largest_component.sum()), 8)

    def test_coverage_hole_layout(self):
        grid = generate_map('coverage_hole', 24, 24, seed=0)
        self.assertFalse(grid.is_passable((10, 5)))
        self.assertTrue(grid.is_passable((10, 11)))
        self.assertTrue(grid.is_passable((10, 12)))
        self.assertTrue(grid.is_passable((1, 1)))
        self.assertEqual(int(grid.largest_component.sum()), int(grid.passable_mask.sum()))

    def test_warehouse_map(self):
        grid = generate_map('warehouse', 0, 0, seed=0)
        self.assertEqual((grid.width, grid.height), (161, 63))
        self.assertTrue(grid.is_passable((0, 0)))
        self.assertFalse(grid.is_passable((20, 1)))

    def test_grid_rejects_bad_cells(self):
        with self.assertRaises(SimulationError):
            GridMap(2, 2, np.array([[0, 2], [0, 0]]))
        with self.assertRaises(SimulationError):
            GridMap(3, 2, np.zeros((2, 2)))


class PlacementTests(SimpleTestCase):

    def setUp(self):
        self.grid = generate_map('random', 16, 16, seed=1)

    def test_full_swap_pairs(self):
        state = reset_episode(self.grid, 4, seed=3)
        starts = [a.start for a in state.agents]
        goals = [a.goal for a in state.agents]
        self.assertEqual(starts[0], goals[1])
        self.assertEqual(starts[1], goals[0])
        self.assertEqual(starts[2], goals[3])
        self.assertEqual(len(set(starts)), 4)
        for cell in starts:
            self.assertTrue(self.grid.largest_component[cell[1], cell[0]])

    def test_full_swap_needs_even_count(self):
        with self.assertRaises(PlacementError):
            reset_episode(self.grid, 3, seed=0)

    def test_partial_swap_allows_odd_count(self):
        state = reset_episode(self.grid, 3, seed=0, swap_fraction=0.5)
        self.assertEqual(state.n_agents, 3)
        self.assertEqual(len(set(a.goal for a in state.agents)), 3)

    def test_reset_is_deterministic(self):
        a = reset_episode(self.grid, 2, seed=9)
        b = reset_episode(self.grid, 2, seed=9)
        self.assertEqual(a.positions, b.positions)
        self.assertEqual([x.goal for x in a.agents], [x.goal for x in b.agents])

    def test_initial_state_rejects_bad_placements(self):
        grid = GridMap.from_rows(['..@', '...'])
        with self.assertRaises(PlacementError):
            initial_state(grid, [(0, 0), (0, 0)], [(1, 0), (1, 1)], 10)
        with self.assertRaises(PlacementError):
            initial_state(grid, [(0, 0)], [(2, 0)], 10)
        with self.assertRaises(PlacementError):
            initial_state(grid, [(0, 0), (1, 0)], [(1, 1), (1, 1)], 10)

    def test_agents_already_home(self):
        grid = GridMap.from_rows(['...'])
        state = initial_state(grid, [(0, 0)], [(0, 0)], 10)
        self.assertTrue(state.terminal)
        self.assertTrue(state.success)


class ConflictResolutionTests(SimpleTestCase):

    def test_vertex_conflict_goes_to_higher_priority(self):
        grid = GridMap.from_rows(['.....'])
        state = initial_state(grid, [(0, 0), (2, 0)], [(1, 0), (4, 0)], 10)
        self.assertEqual([p.rank for p in state.priorities], [0, 1])
        resolved = resolve_conflicts(state, [Action.RIGHT, Action.LEFT])
        self.assertEqual(resolved, (Action.RIGHT, Action.STAY))

    def test_swap_cascades_to_fixed_point(self):
        grid = GridMap.from_rows(['....'])
        state = initial_state(grid, [(0, 0), (1, 0)], [(3, 0), (0, 0)], 10)
        resolved = resolve_conflicts(state, [Action.RIGHT, Action.LEFT])
        self.assertEqual(resolved, (Action.STAY, Action.STAY))

    def test_swap_allowed_when_not_forbidden(self):
        grid = GridMap.from_rows(['....'])
        state = initial_state(grid, [(0, 0), (1, 0)], [(3, 0), (0, 0)], 10)
        resolved = resolve_conflicts(state, [Action.RIGHT, Action.LEFT], forbid_swaps=False)
        self.assertEqual(resolved, (Action.RIGHT, Action.LEFT))

    def test_following_is_allowed(self):
        grid = GridMap.from_rows(['....'])
        state = initial_state(grid, [(0, 0), (1, 0)], [(2, 0), (3, 0)], 10)
        resolved = resolve_conflicts(state, [Action.RIGHT, Action.RIGHT])
        self.assertEqual(resolved, (Action.RIGHT, Action.RIGHT))

    def test_blocked_target_becomes_stay(self):
        grid = GridMap.from_rows(['.@.', '...'])
        state = initial_state(grid, [(0, 0)], [(2, 0)], 10)
        self.assertEqual(resolve_conflicts(state, [Action.RIGHT]), (Action.STAY,))
        self.assertEqual(resolve_conflicts(state, [Action.UP]), (Action.STAY,))

    def test_action_count_checked(self):
        grid = GridMap.from_rows(['....'])
        state = initial_state(grid, [(0, 0), (1, 0)], [(2, 0), (3, 0)], 10)
        with self.assertRaises(SimulationError):
            resolve_conflicts(state, [Action.RIGHT])


class StepTests(SimpleTestCase):

    def test_goal_reached(self):
        grid = GridMap.from_rows(['...'])
        state = initial_state(grid, [(0, 0)], [(1, 0)], 10)
        result = step(state, [Action.RIGHT])
        self.assertEqual(result.state.positions, ((1, 0),))
        self.assertTrue(result.outcome.reached_goal[0])
        self.assertTrue(result.outcome.success)
        self.assertTrue(result.state.terminal)
        self.assertEqual(result.state.timestep, 1)
        config = RewardConfig()
        shaping = config.discount * 0.0 + config.pbrs_factor * 1.0
        self.assertAlmostEqual(result.rewards[0], config.goal + config.time_step + shaping)

    def test_truncation(self):
        grid = GridMap.from_rows(['...'])
        state = initial_state(grid, [(0, 0)], [(2, 0)], max_steps=1)
        result = step(state, [Action.STAY])
        self.assertTrue(result.state.terminal)
        self.assertFalse(result.state.success)
        with self.assertRaises(TerminalStateError):
            step(result.state, [Action.STAY])

    def test_wall_bump_counts_as_collision(self):
        grid = GridMap.from_rows(['..', '@.'])
        state = initial_state(grid, [(0, 0)], [(1, 1)], 10)
        result = step(state, [Action.DOWN])
        self.assertTrue(result.outcome.collisions[0])
        self.assertEqual(result.state.positions, ((0, 0),))
        quiet = step(state, [Action.DOWN], env_config=EnvironmentConfig(wall_bump_collision=False))
        self.assertFalse(quiet.outcome.collisions[0])

    def test_input_state_unchanged(self):
        grid = GridMap.from_rows(['....'])
        state = initial_state(grid, [(0, 0)], [(3, 0)], 10)
        step(state, [Action.RIGHT])
        self.assertEqual(state.positions, ((0, 0),))
        self.assertEqual(state.timestep, 0)

    def test_observations_match_agents(self):
        grid = generate_map('random', 16, 16, seed=5)
        state = reset_episode(grid, 2, seed=5)
        result = step(state, [Action.STAY, Action.STAY])
        self.assertEqual(len(result.observations), 2)
        self.assertEqual(result.observations[0].spatial.shape, (4, 15, 15))


class EnvironmentTests(SimpleTestCase):

    def test_path_following_episodes_stay_valid(self):
        for seed in range(20):
            grid = generate_map('random', 16, 16, seed=seed, density=0.15, n_agents=4)
            env = MapfEnvironment(grid, n_agents=4, max_steps=64)
            env.reset(seed)
            while not env.done:
                env.step(follow_paths(env.state))
            self.assertEqual(validate_trajectories(grid, env.history), [])
            self.assertEqual(len(env.history), env.state.timestep + 1)
            if env.state.success:
                self.assertTrue(all(t >= 0 for t in env.arrival_times))

    def test_explicit_placement(self):
        grid = GridMap.from_rows(['....'])
        env = MapfEnvironment(grid, n_agents=1, max_steps=10)
        env.reset(0, starts=[(0, 0)], goals=[(2, 0)])
        env.step([Action.RIGHT])
        env.step([Action.RIGHT])
        self.assertTrue(env.done)
        self.assertEqual(env.arrival_times, [2])


class ConflictSafetyTests(SimpleTestCase):

    def random_episode(self, seed: int) -> MapfEnvironment:
        """Épisode à actions aléatoires ; un nombre impair d'agents impose un échange partiel"""
        rng = np.random.default_rng(seed)
        n_agents = int(rng.integers(2, 9))
        size = int(rng.integers(12, 17))
        kind = 'room' if seed % 3 == 0 else 'random'
        grid = generate_map(kind, size, size, seed=seed, density=0.2, n_agents=n_agents)
        env_config = EnvironmentConfig(swap_fraction=1.0 if n_agents % 2 == 0 else 0.5)
        env = MapfEnvironment(grid, n_agents=n_agents, max_steps=16, env_config=env_config,
                              obs_config=TINY_OBSERVATION)
        env.reset(seed)
        while not env.done:
            proposed = [Action(int(a)) for a in rng.integers(0, len(Action), size=n_agents)]
            result = env.step(proposed)
            for wanted, executed in zip(proposed, result.outcome.executed):
                self.assertIn(executed, (wanted, Action.STAY))
        return env

    def test_random_episodes_never_collide(self):
        for seed in range(1000):
            env = self.random_episode(seed)
            self.assertEqual(validate_trajectories(env.grid, env.history), [], msg=f'graine {seed}')

    def test_same_seed_same_trajectory(self):
        for seed in (3, 17, 42):
            first, second = self.random_episode(seed), self.random_episode(seed)
            self.assertEqual(first.history, second.history)
            self.assertEqual(first.arrival_times, second.arrival_times)

    def test_corridor_joint_actions_exhaustively(self):
        grid = GridMap.from_rows(['....'])
        cells = [(x, 0) for x in range(4)]
        for a in cells:
            for b in cells:
                if a == b:
                    continue
                state = initial_state(grid, [a, b], [(3, 0), (0, 0)], 10)
                for first in Action:
                    for second in Action:
                        proposed = (first, second)
                        resolved = resolve_conflicts(state, proposed)
                        after = tuple(apply_action(p, act) for p, act in zip(state.positions, resolved))
                        self.assertEqual(validate_trajectories(grid, [state.positions, after]), [],
                                         msg=f'{a} {b} {proposed}')
                        for wanted, executed in zip(proposed, resolved):
                            self.assertIn(executed, (wanted, Action.STAY))
                        naive = tuple(apply_action(p, act) for p, act in zip(state.positions, proposed))
                        if not validate_trajectories(grid, [state.positions, naive]):
                            self.assertEqual(resolved, proposed, msg=f'{a} {b} {proposed}')


class TrajectoryValidationTests(SimpleTestCase):

    def setUp(self):
        self.grid = GridMap.from_rows(['...', '.@.'])

    def test_valid(self):
        history = [((0, 0), (2, 0)), ((1, 0), (2, 1))]
        self.assertEqual(validate_trajectories(self.grid, history), [])

    def test_swap_detected(self):
        history = [((0, 0), (1, 0)), ((1, 0), (0, 0))]
        violations = validate_trajectories(self.grid, history)
        self.assertEqual(len(violations), 1)
        self.assertIn('échange', violations[0])

    def test_vertex_jump_and_wall(self):
        history = [((0, 0), (2, 0)), ((2, 0), (2, 0)), ((1, 1), (2, 0))]
        violations = validate_trajectories(self.grid, history)
        self.assertTrue(any('conflit de sommet' in v for v in violations))
        self.assertTrue(any('saute' in v for v in violations))
        self.assertTrue(any('interdite' in v for v in violations))
