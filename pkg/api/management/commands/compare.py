# api/management/commands/compare.py
from django.core.management.base import BaseCommand, CommandError

from api.services.benchmark_service import BenchmarkService

from ._config import command_config


class Command(BaseCommand):
    help = "Compare deux politiques entraînées avec et sans canal réseau sur des épisodes appariés"

    def add_arguments(self, parser):
        parser.add_argument('--aware', required=True, help='Point de sauvegarde entraîné avec le canal réseau')
        parser.add_argument('--unaware', required=True, help='Point de sauvegarde entraîné sans le canal réseau')
        parser.add_argument('--config', help='Fichier YAML de configuration')
        parser.add_argument('--episodes', type=int, help="Épisodes appariés (bench.compare_episodes sinon)")
        parser.add_argument('--agents', type=int, default=2)
        parser.add_argument('--map', help='Carte .map (trou de couverture synthétique sinon)')
        parser.add_argument('--scen', help='Scénario .scen associé à --map')
        parser.add_argument('--out', help='Répertoire des rapports CSV et JSON')
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        if bool(options['map']) != bool(options['scen']):
            raise CommandError("--map et --scen vont ensemble")
        if options['episodes'] is not None and options['episodes'] < 1:
            raise CommandError("--episodes doit être au moins 1")
        config = command_config(options['config'])

        result = BenchmarkService().run_comparison(
            options['aware'], options['unaware'], config,
            n_episodes=options['episodes'], out_dir=options['out'],
            map_path=options['map'], scen_path=options['scen'],
            n_agents=options['agents'], seed=options['seed'],
        )
        if result['status'] == 'error':
            raise CommandError(f"Échec de la comparaison : {result['error']}")

        deltas = result['deltas']
        self.stdout.write(
            f"Δ makespan (aware - unaware) : {deltas['makespan_delta']:+.2f}\n"
            f"Δ SINR moyen : {deltas['mean_sinr_db_delta']:+.2f} dB\n"
            f"Pas en coupure : {deltas['aware_blackout_steps']} (aware) / {deltas['unaware_blackout_steps']} (unaware), "
            f"réduction {deltas['blackout_reduction']:.1%}"
        )
        self.stdout.write(self.style.SUCCESS(f"Rapport : {result['csv_path']} / {result['json_path']}"))
