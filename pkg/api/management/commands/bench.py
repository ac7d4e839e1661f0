# api/management/commands/bench.py
from django.core.management.base import BaseCommand, CommandError

from api.services.benchmark_service import BenchmarkService

from ._config import command_config


class Command(BaseCommand):
    help = "Banc d'essai sur une carte et un scénario MovingAI (politique apprise et référence par priorités)"

    def add_arguments(self, parser):
        parser.add_argument('--map', required=True, help='Fichier .map MovingAI')
        parser.add_argument('--scen', required=True, help='Fichier .scen MovingAI')
        parser.add_argument('--agents', type=int, nargs='+', help="Nombres d'agents (bench.agent_counts sinon)")
        parser.add_argument('--checkpoint', help='Point de sauvegarde de la politique apprise (optionnel)')
        parser.add_argument('--config', help='Fichier YAML de configuration')
        parser.add_argument('--runs', type=int, help='Runs par nombre d\'agents (bench.n_runs sinon)')
        parser.add_argument('--out', help='Répertoire des rapports CSV et JSON')
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        config = command_config(options['config'])
        agent_counts = options['agents'] or list(config.bench.agent_counts)
        if any(n < 1 for n in agent_counts):
            raise CommandError("--agents : entiers strictement positifs attendus")
        if options['runs'] is not None and options['runs'] < 1:
            raise CommandError("--runs doit être au moins 1")

        result = BenchmarkService().run_bench(
            options['map'], options['scen'], agent_counts, config,
            checkpoint_path=options['checkpoint'], n_runs=options['runs'],
            out_dir=options['out'], seed=options['seed'],
        )
        if result['status'] == 'error':
            raise CommandError(f"Échec du banc d'essai : {result['error']}")

        for entry in result['aggregates']:
            self.stdout.write(
                f"{entry['variant']:<12} n={entry['n_agents']:<3} succès {entry['success_rate']:.2f} "
                f"makespan {entry['makespan_mean']:.1f} [{entry['makespan_ci_low']:.1f}, {entry['makespan_ci_high']:.1f}]"
            )
        self.stdout.write(self.style.SUCCESS(f"Rapport : {result['csv_path']} / {result['json_path']}"))
