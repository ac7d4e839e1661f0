# api/tests/test_observe.py
import numpy as np
from django.test import SimpleTestCase

from api.services.gridworld import GridMap, initial_state
from api.services.observe import (
    AGENT_CHANNEL, INTENTION_CHANNEL, NETWORK_CHANNEL, OBSTACLE_CHANNEL, ObservationConfig,
    build_all, build_observation, compute_priorities, stack_observations,
)
from api.services.radio import RadioMap


def flat_radio(width, height, sinr_db, sinr_norm):
    shape = (height, width)
    return RadioMap(
        rx_power_dbm=np.zeros((1,) + shape),
        serving_sector=np.zeros(shape, dtype=int),
        sinr_db=np.full(shape, float(sinr_db)),
        sinr_norm=np.full(shape, float(sinr_norm)),
        rate_bps=np.zeros(shape),
        passable=np.ones(shape, dtype=bool),
        noise_floor_dbm=-97.0,
    )


class PriorityTests(SimpleTestCase):

    def test_shorter_distance_ranks_first(self):
        grid = GridMap.from_rows(['..........'])
        state = initial_state(grid, [(0, 0), (7, 0)], [(5, 0), (3, 0)], 20)
        ranks = [p.rank for p in compute_priorities(state)]
        self.assertEqual(ranks, [1, 0])

    def test_ties_broken_by_id(self):
        grid = GridMap.from_rows(['....', '....'])
        state = initial_state(grid, [(0, 0), (0, 1)], [(2, 0), (2, 1)], 20)
        self.assertEqual([p.rank for p in state.priorities], [0, 1])

    def test_arrived_agents_demoted(self):
        grid = GridMap.from_rows(['......'])
        state = initial_state(grid, [(0, 0), (5, 0)], [(0, 0), (1, 0)], 20)
        priorities = state.priorities
        self.assertTrue(priorities[0].demoted)
        self.assertFalse(priorities[1].demoted)
        self.assertEqual([p.rank for p in priorities], [1, 0])
        self.assertEqual(sorted(p.rank for p in priorities), [0, 1])


class ObservationTests(SimpleTestCase):

    def setUp(self):
        self.grid = GridMap.from_rows(['..........'])
        # agent 1 (distance 4) est prioritaire sur agent 0 (distance 5)
        self.state = initial_state(self.grid, [(0, 0), (7, 0)], [(5, 0), (3, 0)], 20)

    def test_shapes(self):
        config = ObservationConfig()
        obs = build_observation(self.state, 0, config=config)
        self.assertEqual(obs.spatial.shape, (4, 15, 15))
        self.assertEqual(obs.spatial.dtype, np.float32)
        self.assertEqual(obs.vector.shape, (config.vector_size,))
        spatial, vector = stack_observations(build_all(self.state))
        self.assertEqual(spatial.shape, (2, 4, 15, 15))
        self.assertEqual(vector.shape, (2, 13))

    def test_obstacles_outside_map(self):
        spatial = build_observation(self.state, 0).spatial
        self.assertEqual(spatial[OBSTACLE_CHANNEL, 7, 7], 0.0)
        self.assertEqual(spatial[OBSTACLE_CHANNEL, 6, 7], 1.0)
        self.assertEqual(spatial[OBSTACLE_CHANNEL, 7, 6], 1.0)
        self.assertTrue(np.all(spatial[OBSTACLE_CHANNEL, 7, 7:] == 0.0))

    def test_other_agents(self):
        spatial = build_observation(self.state, 0).spatial
        self.assertEqual(spatial[AGENT_CHANNEL, 7, 14], 1.0)
        self.assertEqual(spatial[AGENT_CHANNEL].sum(), 1.0)

    def test_intentions_are_asymmetric(self):
        low = build_observation(self.state, 0).spatial
        high = build_observation(self.state, 1).spatial
        for dx in (3, 4, 5, 6):
            self.assertEqual(low[INTENTION_CHANNEL, 7, 7 + dx], 1.0)
        self.assertEqual(low[INTENTION_CHANNEL].sum(), 4.0)
        self.assertEqual(high[INTENTION_CHANNEL].sum(), 0.0)

    def test_intentions_need_comm_range(self):
        config = ObservationConfig(comm_range_factor=0.5)
        spatial = build_observation(self.state, 0, config=config).spatial
        self.assertEqual(spatial[INTENTION_CHANNEL].sum(), 0.0)

    def test_vector(self):
        vector = build_observation(self.state, 0).vector
        np.testing.assert_allclose(vector[:3], [5.0 / np.hypot(10, 1), 0.0, 0.0], rtol=1e-6)
        np.testing.assert_array_equal(vector[3:].reshape(5, 2), [[1, 0], [2, 0], [3, 0], [4, 0], [5, 0]])

    def test_goal_offset_scaled_by_map_diagonal(self):
        for width, height in ((12, 3), (161, 63)):
            grid = GridMap.from_rows(['.' * width] * height)
            corner = (width - 1, height - 1)
            state = initial_state(grid, [(0, 0), corner], [corner, (0, 0)], 20)
            ahead = build_observation(state, 0).vector
            behind = build_observation(state, 1).vector
            self.assertTrue(np.all(np.abs(ahead[:2]) < 1.0))
            self.assertGreater(np.hypot(*ahead[:2]), 0.85)
            np.testing.assert_allclose(behind[:2], -ahead[:2])

    def test_network_channel(self):
        radio = flat_radio(10, 1, 10.0, 0.5)
        spatial = build_observation(self.state, 0, radio=radio).spatial
        self.assertEqual(spatial[NETWORK_CHANNEL, 7, 7], 0.5)
        self.assertEqual(spatial[NETWORK_CHANNEL, 6, 7], 0.0)
        blind = build_observation(self.state, 0, radio=radio, config=ObservationConfig(network_aware=False))
        self.assertEqual(blind.spatial[NETWORK_CHANNEL].sum(), 0.0)
        self.assertEqual(build_observation(self.state, 0).spatial[NETWORK_CHANNEL].sum(), 0.0)

    def test_blackout_can_silence_intentions(self):
        radio = flat_radio(10, 1, -20.0, 0.0)
        open_channel = build_observation(self.state, 0, radio=radio).spatial
        self.assertEqual(open_channel[INTENTION_CHANNEL].sum(), 4.0)
        config = ObservationConfig(blackout_blocks_comm=True)
        silenced = build_observation(self.state, 0, radio=radio, config=config).spatial
        self.assertEqual(silenced[INTENTION_CHANNEL].sum(), 0.0)

    def test_state_untouched(self):
        before = self.state.positions
        build_all(self.state)
        self.assertEqual(self.state.positions, before)
