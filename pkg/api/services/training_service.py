# api/services/training_service.py
import logging
import math
from pathlib import Path
from typing import Dict, Optional

from django.conf import settings
from django.db import transaction

from ..models import TrainingRun, EvaluationRecord
from ..utils import json_safe
from .exceptions import SimulationError
from .neural import load_checkpoint
from .orchestrator import CurriculumDecision, GreedyPolicy, Orchestrator, evaluate
from .run_config import RunConfig

logger = logging.getLogger(__name__)

STATUS_BY_ORCHESTRATOR = {
    'completed': 'COMPLETED',
    'stopped': 'STOPPED',
    'failed': 'FAILED',
    'running': 'RUNNING',
    'pending': 'PENDING',
}


class TrainingService:
    """Service d'entraînement : lance l'orchestrateur et persiste la session et ses évaluations"""

    def __init__(self, output_dir: Optional[str] = None):
        mapf_settings = getattr(settings, 'MAPF_SETTINGS', {})
        self.output_dir = Path(output_dir or mapf_settings.get('TRAINING_OUTPUT_DIR', 'runs'))

    def run_directories(self, run: TrainingRun, checkpoint_dir: Optional[str] = None):
        base = self.output_dir / str(run.id)
        checkpoints = Path(checkpoint_dir) if checkpoint_dir else base / 'checkpoints'
        return checkpoints, base / 'metrics'

    def create_run(self, config: RunConfig, name: str = '', user=None) -> TrainingRun:
        return TrainingRun.objects.create(
            name=name,
            config=json_safe(config.to_dict()),
            seed=config.seed,
            n_actors=config.orchestrator.n_actors,
            backend=config.orchestrator.backend,
            started_by=user,
        )

    def _record_evaluation(self, run: TrainingRun):
        def callback(orchestrator: Orchestrator, result, decision: CurriculumDecision):
            EvaluationRecord.objects.create(
                run=run,
                stage_index=orchestrator.stage.index,
                learn_step=orchestrator.learner.global_step,
                success_rate=result.success_rate,
                mean_makespan=result.mean_makespan,
                mean_reward=result.mean_reward,
                mean_sinr_db=result.mean_sinr_db if math.isfinite(result.mean_sinr_db) else None,
                blackout_steps=result.blackout_steps,
                n_episodes=result.n_episodes,
                graduated=decision is CurriculumDecision.GRADUATE,
            )
        return callback

    def _record_progress(self, run: TrainingRun):
        def callback(orchestrator: Orchestrator):
            TrainingRun.objects.filter(pk=run.pk).update(
                stage_index=orchestrator.stage_index,
                stage_name=orchestrator.stage.name,
                learn_steps=orchestrator.learner.global_step,
                env_steps=orchestrator.transitions_consumed,
            )
        return callback

    def train(self, config: RunConfig, stage_index: int = 0, resume: Optional[str] = None,
              duration_s: Optional[float] = None, checkpoint_dir: Optional[str] = None,
              name: str = '', user=None) -> Dict:
        """
        Lance une session complète. Renvoie un dict de résultat
        (`status`, `run_id`, bilan de l'orchestrateur) ; les erreurs sont
        journalisées et renvoyées dans `error`, la session passe en FAILED.
        """
        run = self.create_run(config, name=name, user=user)
        checkpoints, metrics_dir = self.run_directories(run, checkpoint_dir)
        run.checkpoint_path = str(checkpoints)
        run.metrics_path = str(metrics_dir)
        run.status = 'RUNNING'
        run.save(update_fields=['checkpoint_path', 'metrics_path', 'status', 'updated_at'])

        orchestrator = None
        try:
            orchestrator = Orchestrator(
                config,
                checkpoint_dir=checkpoints,
                metrics_dir=metrics_dir,
                stage_index=stage_index,
                on_evaluation=self._record_evaluation(run),
                on_progress=self._record_progress(run),
            )
            if resume:
                orchestrator.resume(resume)
            logger.info(f"Session {run.id} : démarrage à l'étape {orchestrator.stage_index}")
            summary = orchestrator.run(duration_s)
            self._finish(run, orchestrator, summary)
            return {'status': 'success', 'run_id': str(run.id), **summary}

        except Exception as e:
            logger.error(f"Erreur d'entraînement (session {run.id}): {str(e)}", exc_info=True)
            summary = orchestrator.summary() if orchestrator is not None else {}
            self._finish(run, orchestrator, {**summary, 'status': 'failed'}, error=str(e))
            return {'status': 'error', 'run_id': str(run.id), 'error': str(e), **summary}

    @transaction.atomic
    def _finish(self, run: TrainingRun, orchestrator: Optional[Orchestrator], summary: Dict,
                error: str = ''):
        run.refresh_from_db()
        run.status = STATUS_BY_ORCHESTRATOR.get(summary.get('status'), 'FAILED')
        if orchestrator is not None:
            run.stage_index = orchestrator.stage_index
            run.stage_name = orchestrator.stage.name
            run.learn_steps = orchestrator.learner.global_step
            run.env_steps = orchestrator.transitions_consumed
            if orchestrator.last_checkpoint is not None:
                run.checkpoint_path = str(orchestrator.last_checkpoint)
        run.summary = json_safe(summary)
        run.error_message = error
        run.save()
        logger.info(f"Session {run.id} terminée : {run.status}, {run.learn_steps} pas d'apprentissage")

    def evaluate_checkpoint(self, checkpoint_path: str, config: RunConfig, stage_index: int = 0,
                            n_episodes: Optional[int] = None, seed: int = 0) -> Dict:
        """Évaluation gloutonne d'un point de sauvegarde sur une étape du curriculum"""
        try:
            checkpoint = load_checkpoint(checkpoint_path)
            if checkpoint.params.spec != config.network:
                raise SimulationError(
                    "architecture du point de sauvegarde incompatible avec la section network de la configuration"
                )
            stage = config.stage(stage_index)
            n_episodes = n_episodes or config.orchestrator.n_eval
            result = evaluate(GreedyPolicy(checkpoint.params), stage, n_episodes, seed=seed, config=config)
            logger.info(
                f"Évaluation de {checkpoint_path} sur {stage.name} : succès {result.success_rate:.2f} "
                f"sur {n_episodes} épisodes"
            )
            return {
                'status': 'success',
                'checkpoint': str(checkpoint_path),
                'stage_index': stage.index,
                'stage_name': stage.name,
                'global_step': checkpoint.global_step,
                **result.as_dict(),
            }

        except Exception as e:
            logger.error(f"Erreur d'évaluation de {checkpoint_path}: {str(e)}", exc_info=True)
            return {'status': 'error', 'checkpoint': str(checkpoint_path), 'error': str(e)}

    def get_training_status(self) -> Dict:
        """Statistiques globales des sessions"""
        by_status = {
            code: TrainingRun.objects.filter(status=code).count()
            for code, _ in TrainingRun._meta.get_field('status').choices
        }
        last = TrainingRun.objects.order_by('-created_at').first()
        return {
            'total_runs': TrainingRun.objects.count(),
            'runs_by_status': by_status,
            'total_evaluations': EvaluationRecord.objects.count(),
            'last_run_id': str(last.id) if last else None,
        }

