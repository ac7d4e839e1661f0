# api/services/exceptions.py
"""Exceptions métier du simulateur MAPF et du moteur d'apprentissage."""


class SimulationError(Exception):
    """Erreur de base de tous les services de simulation"""


class MapFormatError(SimulationError):
    """Fichier de carte MovingAI invalide"""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"ligne {line}: {message}"
        super().__init__(message)


class ScenarioFormatError(SimulationError):
    """Fichier de scénario MovingAI invalide"""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"ligne {row}: {message}"
        super().__init__(message)


class MapGenerationError(SimulationError):
    """Aucune carte exploitable après le nombre maximal de tentatives"""


class PlacementError(SimulationError):
    """Placement des agents (départs / objectifs) impossible"""


class PathfindingError(SimulationError):
    """Requête de plus court chemin invalide (cellule bloquée ou hors carte)"""


class TerminalStateError(SimulationError):
    """Transition demandée sur un épisode déjà terminé"""


class ShapeError(SimulationError):
    """Dimensions incohérentes entre entrées et paramètres du réseau"""


class CheckpointError(SimulationError):
    """Point de sauvegarde illisible ou incompatible"""


class ReplayError(SimulationError):
    """Opération invalide sur le tampon de rejeu"""


class ConfigError(SimulationError):
    """Configuration d'exécution invalide ; porte la liste complète des violations"""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))
