# api/services/movingai.py
"""
Lecture et écriture des fichiers MovingAI.

Carte : quatre lignes d'en-tête (`type octile`, `height H`, `width W`, `map`)
puis H lignes de W glyphes. `.`, `G` et `S` (marais) sont franchissables ;
`@`, `O`, `T` et `W` sont bloquants.

Scénario : `version 1` puis des lignes de 9 champs séparés par des tabulations
(bucket, carte, largeur, hauteur, départ x, départ y, objectif x, objectif y,
longueur optimale). La longueur optimale suppose des diagonales à √2 : elle
est conservée pour les rapports mais jamais utilisée comme référence ici.
"""
import logging
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import MapFormatError, ScenarioFormatError
from .gridworld import GridMap

logger = logging.getLogger(__name__)

PASSABLE_GLYPHS = frozenset('.GS')
BLOCKED_GLYPHS = frozenset('@OTW')
SCEN_FIELDS = 9

TextInput = Union[str, bytes]


class Scenario(NamedTuple):
    bucket: int
    map_name: str
    width: int
    height: int
    start: Tuple[int, int]
    goal: Tuple[int, int]
    optimal_length: float


def _as_text(data: TextInput, error_cls):
    if isinstance(data, bytes):
        try:
            return data.decode('utf-8')
        except UnicodeDecodeError as e:
            raise error_cls(f"encodage invalide : {e}", data[:e.start].count(b'\n') + 1) from e
    if not isinstance(data, str):
        raise error_cls(f"texte attendu, {type(data).__name__} reçu")
    return data


def _header_value(line: str, key: str, number: int) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0].lower() != key:
        raise MapFormatError(f"en-tête `{key} <entier>` attendu, trouvé {line!r}", number)
    try:
        value = int(parts[1])
    except ValueError:
        raise MapFormatError(f"valeur de {key} non entière : {parts[1]!r}", number)
    if value <= 0:
        raise MapFormatError(f"{key} doit être strictement positif", number)
    return value


# ============================================================================
# CARTES
# ============================================================================

def parse_map(text: TextInput, name: str = '', cell_size_m: float = 1.0) -> GridMap:
    """Analyse une carte MovingAI ; toute anomalie lève MapFormatError avec son numéro de ligne"""
    lines = _as_text(text, MapFormatError).splitlines()
    if len(lines) < 4:
        raise MapFormatError("en-tête tronqué (4 lignes attendues)", len(lines) + 1)

    kind = lines[0].split()
    if len(kind) != 2 or kind[0].lower() != 'type':
        raise MapFormatError(f"en-tête `type octile` attendu, trouvé {lines[0]!r}", 1)

    dims = {}
    for number in (2, 3):
        key = lines[number - 1].split()[0].lower() if lines[number - 1].split() else ''
        if key not in ('height', 'width') or key in dims:
            raise MapFormatError(f"en-tête `height` ou `width` attendu, trouvé {lines[number - 1]!r}", number)
        dims[key] = _header_value(lines[number - 1], key, number)
    if lines[3].strip().lower() != 'map':
        raise MapFormatError(f"ligne `map` attendue, trouvé {lines[3]!r}", 4)

    width, height = dims['width'], dims['height']
    body = lines[4:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) < height:
        raise MapFormatError(f"corps tronqué : {len(body)} lignes sur {height}", 5 + len(body))
    if len(body) > height:
        raise MapFormatError(f"{len(body) - height} ligne(s) en trop après la carte", 5 + height)

    # le tableau n'est alloué qu'une fois toutes les lignes contrôlées
    rows = []
    for y, row in enumerate(body):
        number = y + 5
        row = row.rstrip('\r\n ')
        if len(row) != width:
            raise MapFormatError(f"{len(row)} glyphes, {width} attendus", number)
        for x, glyph in enumerate(row):
            if glyph not in BLOCKED_GLYPHS and glyph not in PASSABLE_GLYPHS:
                raise MapFormatError(f"glyphe inconnu {glyph!r} en colonne {x}", number)
        rows.append([glyph in BLOCKED_GLYPHS for glyph in row])
    cells = np.array(rows, dtype=np.int8).reshape(height, width)
    return GridMap(width, height, cells, cell_size_m, name)


def serialize_map(grid: GridMap) -> str:
    rows = [''.join('@' if c else '.' for c in row) for row in grid.cells]
    header = ['type octile', f'height {grid.height}', f'width {grid.width}', 'map']
    return '\n'.join(header + rows) + '\n'


def load_map(path, cell_size_m: float = 1.0) -> GridMap:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise MapFormatError(f"lecture impossible de {path} : {e}") from e
    grid = parse_map(data, name=path.stem, cell_size_m=cell_size_m)
    logger.debug(f"Carte {path.name} chargée : {grid.width}x{grid.height}, {grid.blocked_count} cellules bloquées")
    return grid


def write_map(grid: GridMap, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_map(grid), encoding='utf-8')
    return path


# ============================================================================
# SCÉNARIOS
# ============================================================================

def _parse_int(value: str, label: str, row: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScenarioFormatError(f"{label} non entier : {value!r}", row)


def parse_scen(text: TextInput) -> List[Scenario]:
    lines = _as_text(text, ScenarioFormatError).splitlines()
    if not lines:
        raise ScenarioFormatError("fichier vide", 1)
    version = lines[0].split()
    if len(version) != 2 or version[0].lower() != 'version':
        raise ScenarioFormatError(f"en-tête `version 1` attendu, trouvé {lines[0]!r}", 1)
    try:
        float(version[1])
    except ValueError:
        raise ScenarioFormatError(f"version illisible : {version[1]!r}", 1)

    scenarios = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.rstrip('\r\n').split('\t') if '\t' in line else line.split()
        if len(fields) != SCEN_FIELDS:
            raise ScenarioFormatError(f"{len(fields)} champs, {SCEN_FIELDS} attendus", number)
        bucket = _parse_int(fields[0], 'bucket', number)
        width = _parse_int(fields[2], 'largeur', number)
        height = _parse_int(fields[3], 'hauteur', number)
        start = (_parse_int(fields[4], 'départ x', number), _parse_int(fields[5], 'départ y', number))
        goal = (_parse_int(fields[6], 'objectif x', number), _parse_int(fields[7], 'objectif y', number))
        try:
            optimal = float(fields[8])
        except ValueError:
            raise ScenarioFormatError(f"longueur optimale illisible : {fields[8]!r}", number)
        if width <= 0 or height <= 0:
            raise ScenarioFormatError(f"dimensions {width}x{height} invalides", number)
        for label, (x, y) in (('départ', start), ('objectif', goal)):
            if not (0 <= x < width and 0 <= y < height):
                raise ScenarioFormatError(f"{label} {(x, y)} hors de la carte {width}x{height}", number)
        scenarios.append(Scenario(bucket, fields[1].strip(), width, height, start, goal, optimal))
    return scenarios


def load_scen(path) -> List[Scenario]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ScenarioFormatError(f"lecture impossible de {path} : {e}") from e
    return parse_scen(data)


def serialize_scen(scenarios: Sequence[Scenario]) -> str:
    rows = ['version 1']
    for s in scenarios:
        rows.append('\t'.join(str(v) for v in (
            s.bucket, s.map_name, s.width, s.height, s.start[0], s.start[1], s.goal[0], s.goal[1],
            f'{s.optimal_length:.8f}',
        )))
    return '\n'.join(rows) + '\n'


def scenario_agents(scenarios: Sequence[Scenario], n_agents: int, offset: int = 0,
                    grid: Optional[GridMap] = None) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]]]:
    """Départs et objectifs des lignes [offset, offset + n_agents) du scénario"""
    if n_agents < 1:
        raise ScenarioFormatError("au moins un agent est requis")
    if offset + n_agents > len(scenarios):
        raise ScenarioFormatError(
            f"{n_agents} agents demandés à partir de la ligne {offset}, le scénario n'en contient que {len(scenarios)}"
        )
    rows = scenarios[offset:offset + n_agents]
    if grid is not None:
        for i, s in enumerate(rows):
            if (s.width, s.height) != (grid.width, grid.height):
                raise ScenarioFormatError(
                    f"scénario prévu pour {s.width}x{s.height}, carte {grid.width}x{grid.height}", offset + i + 2,
                )
    return [s.start for s in rows], [s.goal for s in rows]
