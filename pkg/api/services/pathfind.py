# api/services/pathfind.py
"""
Services de plus court chemin sur grille 4-connexe : A*, champ de distances
BFS (oracle de test et potentiel de shaping) et extraction des points de
passage relatifs utilisés dans le vecteur d'observation.
"""
import heapq
import logging
from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from .exceptions import PathfindingError

if TYPE_CHECKING:
    from .gridworld import GridMap

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]

# Ordre des voisins : haut, bas, gauche, droite (même ordre que les actions)
NEIGHBOR_OFFSETS = ((0, -1), (0, 1), (-1, 0), (1, 0))

# Champ de distances : tableau (H, W) de float64, np.inf pour les cellules
# inaccessibles ou bloquées.
DistanceField = np.ndarray


@dataclass(frozen=True)
class Path:
    """Suite de cellules (x, y) du départ à l'objectif inclus"""
    cells: Tuple[Cell, ...]

    @property
    def length(self) -> int:
        return len(self.cells) - 1

    @property
    def start(self) -> Cell:
        return self.cells[0]

    @property
    def goal(self) -> Cell:
        return self.cells[-1]

    def index_of(self, pos: Cell) -> int:
        try:
            return self.cells.index(tuple(pos))
        except ValueError:
            return -1

    def advance_to(self, pos: Cell) -> Optional['Path']:
        """Chemin restant depuis pos si pos est sur le chemin, sinon None"""
        idx = self.index_of(pos)
        if idx < 0:
            return None
        if idx == 0:
            return self
        return Path(self.cells[idx:])


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def _check_cell(grid: 'GridMap', cell: Cell, role: str):
    if not grid.in_bounds(cell):
        raise PathfindingError(f"{role} {tuple(cell)} hors de la carte {grid.width}x{grid.height}")
    if not grid.is_passable(cell):
        raise PathfindingError(f"{role} {tuple(cell)} est une cellule bloquée")


def astar(grid: 'GridMap', start: Cell, goal: Cell) -> Optional[Path]:
    """
    Plus court chemin 4-connexe de start à goal, None si inaccessible.

    Départage déterministe : f minimal, puis g maximal, puis (y, x).
    """
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    _check_cell(grid, start, 'départ')
    _check_cell(grid, goal, 'objectif')

    if start == goal:
        return Path((start,))

    cells = grid.cells
    width, height = grid.width, grid.height
    g_score = {start: 0}
    parent = {}
    closed = set()
    open_heap = [(manhattan(start, goal), 0, start[1], start[0])]

    while open_heap:
        f, neg_g, y, x = heapq.heappop(open_heap)
        current = (x, y)
        if current in closed:
            continue
        if current == goal:
            return Path(tuple(_reconstruct(parent, goal)))
        closed.add(current)
        g = -neg_g
        for dx, dy in NEIGHBOR_OFFSETS:
            nx, ny = x + dx, y + dy
            if nx < 0 or ny < 0 or nx >= width or ny >= height or cells[ny, nx]:
                continue
            neighbor = (nx, ny)
            if neighbor in closed:
                continue
            tentative = g + 1
            if tentative < g_score.get(neighbor, np.inf):
                g_score[neighbor] = tentative
                parent[neighbor] = current
                heapq.heappush(
                    open_heap,
                    (tentative + manhattan(neighbor, goal), -tentative, ny, nx),
                )
    return None


def _reconstruct(parent, goal: Cell) -> List[Cell]:
    path = [goal]
    while path[-1] in parent:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def bfs_distance_field(grid: 'GridMap', goal: Cell) -> DistanceField:
    """Distances exactes de chaque cellule à goal (np.inf si inaccessible)"""
    goal = (int(goal[0]), int(goal[1]))
    _check_cell(grid, goal, 'objectif')

    cells = grid.cells
    width, height = grid.width, grid.height
    field = np.full((height, width), np.inf)
    field[goal[1], goal[0]] = 0.0
    frontier = deque([goal])
    while frontier:
        x, y = frontier.popleft()
        next_distance = field[y, x] + 1.0
        for dx, dy in NEIGHBOR_OFFSETS:
            nx, ny = x + dx, y + dy
            if nx < 0 or ny < 0 or nx >= width or ny >= height:
                continue
            if cells[ny, nx] or field[ny, nx] != np.inf:
                continue
            field[ny, nx] = next_distance
            frontier.append((nx, ny))
    field.setflags(write=False)
    return field


def next_waypoints(path: Path, pos: Cell, k: int) -> List[Tuple[int, int]]:
    """
    k décalages (dx, dy) vers les k prochaines cellules du chemin après pos.
    S'il reste moins de k cellules, le décalage vers l'objectif est répété.
    """
    if path is None or not path.cells:
        raise PathfindingError("chemin vide : impossible d'extraire des points de passage")
    idx = path.index_of(pos)
    if idx < 0:
        raise PathfindingError(f"la position {tuple(pos)} n'appartient pas au chemin")

    px, py = int(pos[0]), int(pos[1])
    upcoming = list(path.cells[idx + 1: idx + 1 + k])
    gx, gy = path.goal
    upcoming.extend([(gx, gy)] * (k - len(upcoming)))
    return [(x - px, y - py) for x, y in upcoming]
