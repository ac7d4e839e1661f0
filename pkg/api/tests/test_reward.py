# api/tests/test_reward.py
import math

from django.test import SimpleTestCase

from api.services.reward import RewardConfig, RewardContext, compute_reward, network_term, potential, shaping_term


def context(**overrides):
    values = dict(
        reached_goal=False, collision=False, path_conflict=False,
        distance_before=4.0, distance_after=4.0, sinr_norm=1.0,
    )
    values.update(overrides)
    return RewardContext(**values)


class RewardTests(SimpleTestCase):

    def setUp(self):
        self.config = RewardConfig()

    def test_idle_step(self):
        expected = self.config.time_step + (self.config.discount - 1.0) * potential(4.0, self.config.pbrs_factor)
        self.assertAlmostEqual(compute_reward(context(), self.config), expected)

    def test_components_add_up(self):
        base = compute_reward(context(), self.config)
        self.assertAlmostEqual(compute_reward(context(reached_goal=True), self.config) - base, 2.0)
        self.assertAlmostEqual(compute_reward(context(collision=True), self.config) - base, -1.0)
        self.assertAlmostEqual(compute_reward(context(path_conflict=True), self.config) - base, -1.0)
        both = compute_reward(context(collision=True, path_conflict=True), self.config)
        self.assertAlmostEqual(both - base, -2.0)

    def test_network_term(self):
        self.assertAlmostEqual(network_term(1.0, self.config), 0.0)
        self.assertAlmostEqual(network_term(0.25, self.config), -0.3)
        self.assertAlmostEqual(network_term(0.0, self.config), -0.4)
        base = compute_reward(context(), self.config)
        self.assertAlmostEqual(compute_reward(context(sinr_norm=0.0), self.config) - base, -0.4)

    def test_progress_is_rewarded(self):
        closer = shaping_term(4.0, 3.0, self.config)
        farther = shaping_term(4.0, 5.0, self.config)
        self.assertGreater(closer, 0.0)
        self.assertLess(farther, 0.0)

    def test_infinite_distance_disables_shaping(self):
        self.assertEqual(shaping_term(math.inf, 3.0, self.config), 0.0)
        self.assertEqual(shaping_term(3.0, math.inf, self.config), 0.0)

    def test_shaping_telescopes(self):
        distances = [6.0, 5.0, 5.0, 4.0, 5.0, 3.0, 2.0, 1.0, 0.0]
        gamma = self.config.discount
        total = sum(
            gamma ** t * shaping_term(a, b, self.config)
            for t, (a, b) in enumerate(zip(distances, distances[1:]))
        )
        expected = (
            gamma ** (len(distances) - 1) * potential(distances[-1], self.config.pbrs_factor)
            - potential(distances[0], self.config.pbrs_factor)
        )
        self.assertAlmostEqual(total, expected)
