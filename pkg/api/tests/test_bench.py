# api/tests/test_bench.py
import json
import math
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from api.services.bench import (
    AGGREGATED_METRICS, aggregate, compare_network_awareness, coverage_hole_scenario,
    joint_state_bfs, mean_confidence, prioritized_baseline, run_benchmark, scenario_from_files,
)
from api.services.exceptions import PlacementError, ScenarioFormatError, SimulationError
from api.services.gridworld import GridMap, validate_trajectories
from api.services.movingai import load_map, load_scen, scenario_agents
from api.services.neural import init_network

from .factories import TINY_NETWORK, tiny_config

FIXTURES = Path(__file__).parent / 'fixtures'


class PrioritizedBaselineTests(SimpleTestCase):

    def setUp(self):
        self.grid = load_map(FIXTURES / 'open-8-6.map')
        self.scenarios = load_scen(FIXTURES / 'open-8-6.scen')

    def test_open_map_plans_are_valid(self):
        for n_agents in (2, 4):
            starts, goals = scenario_agents(self.scenarios, n_agents, 0, self.grid)
            result = prioritized_baseline(self.grid, starts, goals)
            self.assertTrue(result.success)
            history = result.joint_history()
            self.assertEqual(validate_trajectories(self.grid, history), [])
            self.assertEqual(list(history[0]), starts)
            self.assertEqual(list(history[-1]), goals)
            self.assertEqual(len(history), result.makespan + 1)
            lower_bound = sum(abs(s[0] - g[0]) + abs(s[1] - g[1]) for s, g in zip(starts, goals))
            self.assertGreaterEqual(result.sum_of_costs, lower_bound)

    def test_start_equals_goal(self):
        result = prioritized_baseline(self.grid, [(0, 0), (3, 3)], [(0, 0), (3, 3)])
        self.assertTrue(result.success)
        self.assertEqual(result.makespan, 0)
        self.assertEqual(result.sum_of_costs, 0)
        self.assertEqual(joint_state_bfs(self.grid, [(0, 0)], [(0, 0)]).makespan, 0)

    def test_pocket_swap_needs_joint_search(self):
        # L'ordre séquentiel bloque dans un couloir à niche ; la recherche conjointe trouve le croisement
        pocket = GridMap.from_rows(['.....', '@@.@@'])
        starts, goals = [(0, 0), (4, 0)], [(4, 0), (0, 0)]
        result = prioritized_baseline(pocket, starts, goals)
        self.assertFalse(result.success)
        self.assertEqual(result.attempts, 2)
        self.assertEqual(len(result.failed_agents), 1)

        optimal = joint_state_bfs(pocket, starts, goals)
        self.assertTrue(optimal.found)
        self.assertEqual(optimal.makespan, 6)

    def test_corridor_swap_is_impossible(self):
        corridor = GridMap.from_rows(['.....'])
        optimal = joint_state_bfs(corridor, [(0, 0), (4, 0)], [(4, 0), (0, 0)])
        self.assertFalse(optimal.found)
        self.assertFalse(optimal.exhausted)
        self.assertFalse(prioritized_baseline(corridor, [(0, 0), (4, 0)], [(4, 0), (0, 0)]).success)

    def test_baseline_never_beats_optimum(self):
        square = GridMap.from_rows(['....'] * 4)
        starts, goals = [(0, 0), (3, 3)], [(3, 3), (0, 0)]
        optimal = joint_state_bfs(square, starts, goals)
        result = prioritized_baseline(square, starts, goals)
        self.assertEqual(optimal.makespan, 6)
        self.assertTrue(result.success)
        self.assertGreaterEqual(result.makespan, optimal.makespan)

    def test_joint_search_budget(self):
        result = joint_state_bfs(self.grid, [(0, 0), (1, 0)], [(7, 5), (6, 5)], max_states=10)
        self.assertFalse(result.found)
        self.assertTrue(result.exhausted)

    def test_invalid_placements(self):
        with self.assertRaises(PlacementError):
            prioritized_baseline(self.grid, [(0, 0)], [(1, 1), (2, 2)])
        with self.assertRaises(PlacementError):
            prioritized_baseline(self.grid, [(0, 0), (0, 0)], [(1, 1), (2, 2)])
        with self.assertRaises(PlacementError):
            prioritized_baseline(self.grid, [(9, 0)], [(1, 1)])


class StatisticsTests(SimpleTestCase):

    def test_student_interval(self):
        mean, low, high = mean_confidence([1.0, 2.0, 3.0])
        half_width = 4.302653 * (1.0 / math.sqrt(3.0))
        self.assertAlmostEqual(mean, 2.0)
        self.assertAlmostEqual(low, 2.0 - half_width, places=4)
        self.assertAlmostEqual(high, 2.0 + half_width, places=4)

    def test_degenerate_intervals(self):
        self.assertEqual(mean_confidence([5.0]), (5.0, 5.0, 5.0))
        self.assertEqual(mean_confidence([2.0, 2.0, None, float('nan')]), (2.0, 2.0, 2.0))
        self.assertTrue(all(math.isnan(v) for v in mean_confidence([])))

    def test_aggregate_groups_by_variant_and_agent_count(self):
        def row(variant, n_agents, success, makespan):
            entry = {metric: 1.0 for metric in AGGREGATED_METRICS}
            entry.update(variant=variant, n_agents=n_agents, success=success, makespan=makespan)
            return entry

        rows = [row('prioritized', 2, True, 10), row('prioritized', 2, False, 20), row('learned', 2, True, 12)]
        aggregates = aggregate(rows)
        self.assertEqual([(a['variant'], a['n_agents']) for a in aggregates], [('learned', 2), ('prioritized', 2)])
        self.assertEqual(aggregates[1]['success_rate'], 0.5)
        self.assertEqual(aggregates[1]['makespan_mean'], 15.0)
        self.assertEqual(aggregates[0]['n_runs'], 1)
        self.assertEqual(aggregate([]), [])


class CampaignTests(SimpleTestCase):

    def setUp(self):
        self.grid = load_map(FIXTURES / 'open-8-6.map')
        self.scenarios = load_scen(FIXTURES / 'open-8-6.scen')
        self.config = tiny_config()

    def test_prioritized_campaign(self):
        report = run_benchmark(self.grid, self.scenarios, [2, 4], None, self.config, n_runs=3, seed=1)
        self.assertEqual(len(report.rows), 6)
        self.assertEqual({row['variant'] for row in report.rows}, {'prioritized'})
        self.assertTrue(all(row['success'] for row in report.rows))
        self.assertTrue(all(math.isfinite(row['mean_sinr_db']) for row in report.rows))
        self.assertEqual([a['n_agents'] for a in report.aggregates], [2, 4])
        self.assertEqual(report.meta['variants'], ['prioritized'])

        with tempfile.TemporaryDirectory() as tmp:
            csv_path, json_path = report.write(tmp, 'open')
            self.assertEqual(len(csv_path.read_text().splitlines()), 7)
            payload = json.loads(json_path.read_text())
            self.assertEqual(payload['meta']['map'], 'open-8-6')
            self.assertEqual(len(payload['aggregates']), 2)

    def test_learned_campaign(self):
        params = init_network(0, TINY_NETWORK)
        report = run_benchmark(self.grid, self.scenarios, [2], params, self.config, n_runs=2, max_steps=10)
        self.assertEqual(sorted(row['variant'] for row in report.rows), ['learned', 'learned', 'prioritized', 'prioritized'])
        for row in report.rows:
            self.assertEqual(row['violations'], 0)
            self.assertLessEqual(row['makespan'], 10)

    def test_campaign_errors(self):
        with self.assertRaises(ScenarioFormatError):
            run_benchmark(self.grid, self.scenarios, [60], None, self.config, n_runs=1)
        with self.assertRaises(SimulationError):
            run_benchmark(self.grid, self.scenarios, [2], None, self.config, n_runs=1, variants=['learned'])
        with self.assertRaises(SimulationError):
            run_benchmark(self.grid, self.scenarios, [2], None, self.config, n_runs=1, variants=['cbs'])

    def test_runs_beyond_scenario_are_drawn(self):
        report = run_benchmark(self.grid, self.scenarios, [8], None, self.config, n_runs=8, seed=3)
        self.assertEqual(len(report.rows), 8)
        self.assertEqual(report.aggregates[0]['n_runs'], 8)


class NetworkComparisonTests(SimpleTestCase):

    def setUp(self):
        self.config = tiny_config()
        self.scenario = coverage_hole_scenario(n_agents=2, max_steps=20)

    def test_placements_cross_the_map(self):
        starts, goals = self.scenario.placements(4)
        self.assertEqual((starts, goals), self.scenario.placements(4))
        self.assertLess(starts[0][0], 3)
        self.assertGreaterEqual(goals[0][0], 21)
        self.assertGreaterEqual(starts[1][0], 21)
        self.assertLess(goals[1][0], 3)

    def test_paired_comparison(self):
        report = compare_network_awareness(
            init_network(0, TINY_NETWORK), init_network(1, TINY_NETWORK), self.config, self.scenario,
            n_episodes=2, seed=0,
        )
        self.assertEqual([row['variant'] for row in report.rows], ['aware', 'unaware'] * 2)
        self.assertEqual(report.rows[0]['seed'], report.rows[1]['seed'])
        self.assertTrue(all(row['violations'] == 0 for row in report.rows))
        deltas = report.meta['deltas']
        self.assertEqual(
            deltas['blackout_steps_delta'], deltas['aware_blackout_steps'] - deltas['unaware_blackout_steps']
        )
        self.assertEqual(report.meta['n_episodes'], 2)

    def test_null_comparison_has_zero_deltas(self):
        params = init_network(0, TINY_NETWORK)
        report = compare_network_awareness(
            params, params, self.config, self.scenario, n_episodes=2, seed=5, aware_channel=False,
        )
        deltas = report.meta['deltas']
        self.assertEqual(deltas['makespan_delta'], 0.0)
        self.assertEqual(deltas['mean_sinr_db_delta'], 0.0)
        self.assertEqual(deltas['blackout_steps_delta'], 0)

    def test_scenario_from_files(self):
        grid = load_map(FIXTURES / 'open-8-6.map')
        scenario = scenario_from_files(grid, load_scen(FIXTURES / 'open-8-6.scen'), self.config, max_steps=10)
        self.assertEqual(scenario.placements(0), scenario_agents(scenario.scenarios, 2, 0, grid))
        params = init_network(0, TINY_NETWORK)
        report = compare_network_awareness(params, params, self.config, scenario, n_episodes=1)
        self.assertEqual(len(report.rows), 2)
