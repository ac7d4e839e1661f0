# api/services/benchmark_service.py
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

from django.conf import settings

from ..models import BenchmarkReport
from ..utils import json_safe
from .bench import (
    BenchReport, compare_network_awareness, coverage_hole_scenario, prioritized_baseline,
    run_benchmark, scenario_from_files,
)
from .exceptions import SimulationError
from .movingai import load_map, load_scen, parse_map, parse_scen, scenario_agents
from .neural import NetworkParams, load_checkpoint
from .run_config import RunConfig

logger = logging.getLogger(__name__)


class BenchmarkService:
    """Service de banc d'essai : campagnes, comparaisons réseau et planification de référence"""

    def __init__(self, output_dir: Optional[str] = None):
        mapf_settings = getattr(settings, 'MAPF_SETTINGS', {})
        self.output_dir = Path(output_dir or mapf_settings.get('BENCH_OUTPUT_DIR', 'bench'))

    def _params(self, checkpoint_path: Optional[str], config: RunConfig) -> Optional[NetworkParams]:
        if not checkpoint_path:
            return None
        params = load_checkpoint(checkpoint_path).params
        if params.spec != config.network:
            raise SimulationError(
                f"{checkpoint_path} : architecture incompatible avec la section network de la configuration"
            )
        return params

    def _persist(self, report: BenchReport, kind: str, out_dir: Path, stem: str,
                 checkpoint_path: str = '', user=None) -> BenchmarkReport:
        csv_path, json_path = report.write(out_dir, stem)
        agent_counts = report.meta.get('agent_counts') or [report.meta.get('n_agents')]
        return BenchmarkReport.objects.create(
            kind=kind,
            map_name=report.meta.get('map', ''),
            agent_counts=json_safe(agent_counts),
            n_runs=report.meta.get('n_runs') or report.meta.get('n_episodes') or 0,
            checkpoint_path=checkpoint_path,
            summary=json_safe({'meta': report.meta, 'aggregates': report.aggregates}),
            csv_path=str(csv_path),
            json_path=str(json_path),
            created_by=user,
        )

    def run_bench(self, map_path: str, scen_path: str, agent_counts: Sequence[int], config: RunConfig,
                  checkpoint_path: Optional[str] = None, n_runs: Optional[int] = None,
                  out_dir: Optional[str] = None, seed: int = 0, user=None) -> Dict:
        """Campagne prioritized (et learned si un point de sauvegarde est fourni) sur une carte MovingAI"""
        try:
            grid = load_map(map_path, cell_size_m=config.environment.cell_size_m)
            scenarios = load_scen(scen_path)
            params = self._params(checkpoint_path, config)
            report = run_benchmark(
                grid, scenarios, agent_counts, params, config,
                n_runs=n_runs or config.bench.n_runs, seed=seed,
            )
            record = self._persist(
                report, 'bench', Path(out_dir) if out_dir else self.output_dir, f'bench-{grid.name}',
                checkpoint_path or '', user,
            )
            logger.info(f"Banc d'essai {grid.name} enregistré ({record.id})")
            return {
                'status': 'success',
                'report_id': str(record.id),
                'csv_path': record.csv_path,
                'json_path': record.json_path,
                'aggregates': report.aggregates,
            }

        except Exception as e:
            logger.error(f"Erreur de banc d'essai sur {map_path}: {str(e)}", exc_info=True)
            return {'status': 'error', 'error': str(e)}

    def run_comparison(self, aware_checkpoint: str, unaware_checkpoint: str, config: RunConfig,
                       n_episodes: Optional[int] = None, out_dir: Optional[str] = None,
                       map_path: Optional[str] = None, scen_path: Optional[str] = None,
                       n_agents: int = 2, seed: int = 0, user=None) -> Dict:
        """Comparaison appariée avec / sans canal réseau (trou de couverture par défaut)"""
        try:
            aware = self._params(aware_checkpoint, config)
            unaware = self._params(unaware_checkpoint, config)
            if map_path and scen_path:
                grid = load_map(map_path, cell_size_m=config.environment.cell_size_m)
                scenario = scenario_from_files(grid, load_scen(scen_path), config, n_agents=n_agents, seed=seed)
            elif map_path or scen_path:
                raise SimulationError("--map et --scen vont ensemble")
            else:
                scenario = coverage_hole_scenario(n_agents=n_agents)
            report = compare_network_awareness(aware, unaware, config, scenario, n_episodes, seed=seed)
            record = self._persist(
                report, 'compare', Path(out_dir) if out_dir else self.output_dir,
                f'compare-{scenario.grid.name}', aware_checkpoint, user,
            )
            logger.info(f"Comparaison réseau {scenario.grid.name} enregistrée ({record.id})")
            return {
                'status': 'success',
                'report_id': str(record.id),
                'csv_path': record.csv_path,
                'json_path': record.json_path,
                'deltas': report.meta['deltas'],
                'aggregates': report.aggregates,
            }

        except Exception as e:
            logger.error(f"Erreur de comparaison réseau : {str(e)}", exc_info=True)
            return {'status': 'error', 'error': str(e)}

    def plan(self, map_text: str, scen_text: str, n_agents: int, offset: int = 0,
             max_restarts: int = 10, horizon: Optional[int] = None) -> Dict:
        """Planification par priorités sur une carte et un scénario fournis en texte"""
        try:
            grid = parse_map(map_text)
            starts, goals = scenario_agents(parse_scen(scen_text), n_agents, offset, grid)
            result = prioritized_baseline(grid, starts, goals, horizon=horizon, max_restarts=max_restarts)
            if not result.success:
                return {
                    'status': 'no_solution',
                    'failed_agents': list(result.failed_agents),
                    'attempts': result.attempts,
                }
            return {
                'status': 'success',
                'makespan': result.makespan,
                'sum_of_costs': result.sum_of_costs,
                'order': list(result.order),
                'attempts': result.attempts,
                'paths': [[list(cell) for cell in path] for path in result.paths],
            }

        except SimulationError as e:
            logger.warning(f"Planification refusée : {str(e)}")
            return {'status': 'invalid', 'error': str(e)}
        except Exception as e:
            logger.error(f"Erreur de planification : {str(e)}", exc_info=True)
            return {'status': 'error', 'error': str(e)}

    def get_bench_status(self) -> Dict:
        return {
            'total_reports': BenchmarkReport.objects.count(),
            'bench_reports': BenchmarkReport.objects.filter(kind='bench').count(),
            'compare_reports': BenchmarkReport.objects.filter(kind='compare').count(),
        }
