# api/management/commands/radio_map.py
from pathlib import Path

import pandas as pd
from django.core.management.base import BaseCommand, CommandError

from api.services.exceptions import SimulationError
from api.services.gridworld import MAP_KINDS, generate_map
from api.services.movingai import load_map
from api.services.radio import build_radio_map

from ._config import command_config

EXPORT_COLUMNS = ['x', 'y', 'sinr_db', 'sinr_norm', 'serving_sector', 'blackout']


class Command(BaseCommand):
    help = "Calcule la carte SINR d'une carte MovingAI ou générée et l'exporte en CSV"

    def add_arguments(self, parser):
        parser.add_argument('--map', help='Fichier .map MovingAI')
        parser.add_argument('--kind', choices=[k for k in MAP_KINDS if k != 'warehouse'], default='random')
        parser.add_argument('--width', type=int, default=32)
        parser.add_argument('--height', type=int, default=32)
        parser.add_argument('--density', type=float, help='Densité d\'obstacles (environment.density sinon)')
        parser.add_argument('--map-seed', type=int, default=0, help='Graine du générateur de carte')
        parser.add_argument('--config', help='Fichier YAML de configuration (section radio)')
        parser.add_argument('--seed', type=int, default=0, help='Graine du masquage')
        parser.add_argument('--out', help='Fichier CSV de sortie (x, y, sinr_db, sinr_norm, serving_sector, blackout)')

    def handle(self, *args, **options):
        config = command_config(options['config'])
        cell_size = config.environment.cell_size_m
        try:
            if options['map']:
                grid = load_map(options['map'], cell_size_m=cell_size)
            else:
                density = options['density'] if options['density'] is not None else config.environment.density
                grid = generate_map(
                    options['kind'], options['width'], options['height'], options['map_seed'],
                    density=density, config=config.environment, cell_size_m=cell_size,
                )
            radio = build_radio_map(grid, config.radio, seed=options['seed'])
        except SimulationError as e:
            raise CommandError(str(e))

        summary = radio.summary()
        for key, value in summary.items():
            self.stdout.write(f"{key:<18} {value}")

        if options['out']:
            out = Path(options['out'])
            out.parent.mkdir(parents=True, exist_ok=True)
            pd.DataFrame.from_records(radio.rows(), columns=EXPORT_COLUMNS).to_csv(out, index=False)
            self.stdout.write(self.style.SUCCESS(f"{summary.get('passable_cells', 0)} cellules exportées dans {out}"))
