# api/management/commands/evaluate.py
import json

from django.core.management.base import BaseCommand, CommandError

from api.services.training_service import TrainingService

from ._config import command_config


class Command(BaseCommand):
    help = "Évalue un point de sauvegarde (politique gloutonne) sur une étape du curriculum"

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True, help='Point de sauvegarde .npz')
        parser.add_argument('--config', help='Fichier YAML de configuration')
        parser.add_argument('--stage', type=int, default=0, help='Étape du curriculum évaluée')
        parser.add_argument('--episodes', type=int, help="Nombre d'épisodes (orchestrator.n_eval sinon)")
        parser.add_argument('--seed', type=int, default=0, help="Graine d'évaluation")
        parser.add_argument('--json', action='store_true', help='Sortie JSON')

    def handle(self, *args, **options):
        if options['episodes'] is not None and options['episodes'] < 1:
            raise CommandError("--episodes doit être au moins 1")
        config = command_config(options['config'])
        result = TrainingService().evaluate_checkpoint(
            options['checkpoint'], config, stage_index=options['stage'],
            n_episodes=options['episodes'], seed=options['seed'],
        )
        if result['status'] == 'error':
            raise CommandError(f"Évaluation impossible : {result['error']}")

        if options['json']:
            self.stdout.write(json.dumps(result, indent=2, default=float))
            return
        self.stdout.write(
            self.style.SUCCESS(
                f"{result['stage_name']} ({result['n_episodes']} épisodes)\n"
                f"Taux de succès : {result['success_rate']:.3f}\n"
                f"Makespan moyen : {result['mean_makespan']:.1f}\n"
                f"Récompense moyenne : {result['mean_reward']:.3f}\n"
                f"SINR moyen : {result['mean_sinr_db']:.2f} dB\n"
                f"Pas en coupure : {result['blackout_steps']}"
            )
        )
