# api/management/commands/train.py
from django.core.management.base import BaseCommand, CommandError

from api.services.orchestrator import BACKENDS
from api.services.training_service import TrainingService

from ._config import command_config


class Command(BaseCommand):
    help = "Lance l'entraînement acteurs/apprenant sur le curriculum de la configuration"

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Fichier YAML de configuration (valeurs par défaut sinon)')
        parser.add_argument('--stage', type=int, default=0, help='Étape de départ du curriculum')
        parser.add_argument('--actors', type=int, help="Nombre d'acteurs (remplace orchestrator.n_actors)")
        parser.add_argument('--seed', type=int, help='Graine globale (remplace seed)')
        parser.add_argument('--checkpoint-dir', help='Répertoire des points de sauvegarde')
        parser.add_argument('--resume', help='Point de sauvegarde (.npz) à reprendre')
        parser.add_argument('--duration', type=float, help='Durée maximale en secondes')
        parser.add_argument('--backend', choices=BACKENDS, help='Acteurs en processus ou en threads')
        parser.add_argument('--name', default='', help='Nom de la session')

    def handle(self, *args, **options):
        if options['actors'] is not None and options['actors'] < 1:
            raise CommandError("--actors doit être au moins 1")
        if options['duration'] is not None and options['duration'] <= 0:
            raise CommandError("--duration doit être strictement positive")

        config = command_config(
            options['config'], seed=options['seed'],
            n_actors=options['actors'], backend=options['backend'],
        )
        if not 0 <= options['stage'] < len(config.curriculum):
            raise CommandError(f"--stage hors du curriculum (0..{len(config.curriculum) - 1})")

        stage = config.curriculum[options['stage']]
        self.stdout.write(
            f"Entraînement : {config.orchestrator.n_actors} acteur(s) ({config.orchestrator.backend}), "
            f"étape {stage.index} {stage.name}"
        )
        result = TrainingService().train(
            config,
            stage_index=options['stage'],
            resume=options['resume'],
            duration_s=options['duration'],
            checkpoint_dir=options['checkpoint_dir'],
            name=options['name'],
        )
        if result['status'] == 'error':
            raise CommandError(f"Échec de l'entraînement (session {result['run_id']}) : {result['error']}")

        self.stdout.write(
            self.style.SUCCESS(
                f"Session {result['run_id']} : {result['status']} / {result.get('stage_name')}\n"
                f"Pas d'apprentissage : {result['learn_steps']}\n"
                f"Transitions consommées : {result['env_steps']} (résidu {result['residue']})\n"
                f"Épisodes : {result['episodes']}, évaluations : {result['evaluations']}\n"
                f"Point de sauvegarde : {result['checkpoint']}"
            )
        )
