# api/tests/test_services.py
import tempfile
from pathlib import Path

from django.test import TestCase

from api.models import TrainingRun
from api.services.benchmark_service import BenchmarkService
from api.services.neural import init_network, init_optimizer, save_checkpoint
from api.services.training_service import TrainingService

from .factories import TINY_NETWORK, tiny_config

POCKET_MAP = 'type octile\nheight 2\nwidth 5\nmap\n.....\n@@.@@\n'
POCKET_SCEN = (
    'version 1\n'
    '0\tpocket.map\t5\t2\t0\t0\t4\t0\t4.00000000\n'
    '0\tpocket.map\t5\t2\t4\t0\t0\t0\t4.00000000\n'
)


class BenchmarkServiceTests(TestCase):

    def test_plan_without_solution(self):
        result = BenchmarkService().plan(POCKET_MAP, POCKET_SCEN, 2)
        self.assertEqual(result['status'], 'no_solution')
        self.assertEqual(result['attempts'], 2)

    def test_plan_single_agent(self):
        result = BenchmarkService().plan(POCKET_MAP, POCKET_SCEN, 1, offset=1)
        self.assertEqual(result['status'], 'success')
        self.assertEqual(result['makespan'], 4)
        self.assertEqual(result['paths'][0][-1], [0, 0])

    def test_plan_invalid_map(self):
        result = BenchmarkService().plan('type octile\n', POCKET_SCEN, 1)
        self.assertEqual(result['status'], 'invalid')

    def test_bench_status(self):
        self.assertEqual(BenchmarkService().get_bench_status()['total_reports'], 0)


class TrainingServiceTests(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.service = TrainingService(output_dir=self.tmp.name)
        params = init_network(0, TINY_NETWORK)
        self.checkpoint = save_checkpoint(
            Path(self.tmp.name) / 'policy.npz', params, params.copy(), init_optimizer(params), global_step=7,
        )

    def test_evaluate_checkpoint(self):
        result = self.service.evaluate_checkpoint(self.checkpoint, tiny_config(), stage_index=1, n_episodes=2)
        self.assertEqual(result['status'], 'success')
        self.assertEqual(result['global_step'], 7)
        self.assertEqual(result['stage_name'], 'Random-8x8-2-1')
        self.assertTrue(0.0 <= result['success_rate'] <= 1.0)

    def test_evaluate_unknown_stage(self):
        result = self.service.evaluate_checkpoint(self.checkpoint, tiny_config(), stage_index=4)
        self.assertEqual(result['status'], 'error')

    def test_run_directories(self):
        run = self.service.create_run(tiny_config(), name='essai')
        checkpoints, metrics_dir = self.service.run_directories(run)
        self.assertEqual(checkpoints, Path(self.tmp.name) / str(run.id) / 'checkpoints')
        self.assertEqual(metrics_dir.name, 'metrics')
        self.assertEqual(run.n_actors, 2)
        self.assertEqual(run.config['curriculum'][0]['name'], 'Random-8x8-2-0')

    def test_training_status(self):
        TrainingRun.objects.create(status='FAILED')
        status = self.service.get_training_status()
        self.assertEqual(status['total_runs'], 1)
        self.assertEqual(status['runs_by_status']['FAILED'], 1)
        self.assertEqual(status['runs_by_status']['RUNNING'], 0)
