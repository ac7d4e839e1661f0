# api/management/commands/_config.py
"""Chargement commun de la RunConfig pour les commandes de gestion."""
import dataclasses

from django.conf import settings
from django.core.management.base import CommandError

from api.services.exceptions import ConfigError
from api.services.run_config import load_config


def command_config(path=None, seed=None, **orchestrator_overrides):
    """
    RunConfig du fichier donné (valeurs par défaut sinon), complétée par le
    chemin de carte d'entrepôt des settings et les options de la ligne de commande.
    """
    try:
        config = load_config(path)
    except ConfigError as e:
        raise CommandError("Configuration invalide :\n  " + "\n  ".join(e.errors))

    if not config.environment.warehouse_map_path:
        warehouse = settings.MAPF_SETTINGS.get('WAREHOUSE_MAP_PATH', '')
        config = dataclasses.replace(
            config, environment=dataclasses.replace(config.environment, warehouse_map_path=warehouse),
        )
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    overrides = {k: v for k, v in orchestrator_overrides.items() if v is not None}
    if overrides:
        config = dataclasses.replace(config, orchestrator=dataclasses.replace(config.orchestrator, **overrides))
    return config
