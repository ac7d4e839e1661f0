# api/services/replay.py
"""
Rejeu d'expérience priorisé : arbre de sommes en tableau, échantillonnage
proportionnel stratifié, poids d'échantillonnage préférentiel et recuit de β.

Les indices renvoyés par `sample` sont des numéros de série globaux : un
indice dont l'emplacement a été réécrit depuis est ignoré (et compté) lors de
la mise à jour des priorités.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ReplayError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReplayConfig:
    """Section `replay` de la RunConfig"""
    capacity: int = 2_000_000
    alpha: float = 0.6
    priority_epsilon: float = 1e-5
    beta_start: float = 0.4
    beta_end: float = 1.0
    # 0 : horizon du recuit d'ε
    beta_horizon: int = 0


class Transition(NamedTuple):
    obs: 'object'
    action: int
    reward: float
    next_obs: 'object'
    done: bool


class Batch(NamedTuple):
    spatial: np.ndarray
    vector: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_spatial: np.ndarray
    next_vector: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.actions)


class SumTree:
    """
    Arbre binaire complet stocké dans un tableau : la racine est en 1, les
    feuilles en [P, P + capacity). Un second tableau tient les maxima.
    """

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.leaf_offset = 1
        while self.leaf_offset < self.capacity:
            self.leaf_offset *= 2
        self.sums = np.zeros(2 * self.leaf_offset)
        self.maxima = np.zeros(2 * self.leaf_offset)

    @property
    def total(self) -> float:
        return float(self.sums[1])

    @property
    def max_priority(self) -> float:
        return float(self.maxima[1])

    def get(self, slots) -> np.ndarray:
        return self.sums[np.asarray(slots) + self.leaf_offset]

    def update(self, slots, priorities):
        nodes = np.asarray(slots, dtype=np.int64) + self.leaf_offset
        self.sums[nodes] = priorities
        self.maxima[nodes] = priorities
        nodes = np.unique(nodes // 2)
        while nodes[0] >= 1:
            left = 2 * nodes
            self.sums[nodes] = self.sums[left] + self.sums[left + 1]
            self.maxima[nodes] = np.maximum(self.maxima[left], self.maxima[left + 1])
            if nodes[0] == 1:
                break
            nodes = np.unique(nodes // 2)

    def find(self, masses: np.ndarray) -> np.ndarray:
        """Descente vectorisée : feuille dont l'intervalle cumulé contient chaque masse"""
        nodes = np.ones(len(masses), dtype=np.int64)
        masses = np.array(masses, dtype=float)
        while nodes[0] < self.leaf_offset:
            left = 2 * nodes
            left_sums = self.sums[left]
            go_right = masses > left_sums
            masses = np.where(go_right, masses - left_sums, masses)
            nodes = np.where(go_right, left + 1, left)
        return nodes - self.leaf_offset

    def clear(self):
        self.sums.fill(0.0)
        self.maxima.fill(0.0)


class PERBuffer:
    """Tampon circulaire priorisé ; stockage dense float32 alloué au premier ajout"""

    def __init__(self, capacity: int = 2_000_000, alpha: float = 0.6, priority_epsilon: float = 1e-5,
                 seed: Optional[int] = None):
        if capacity < 1:
            raise ReplayError("la capacité doit être strictement positive")
        self.capacity = int(capacity)
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self.tree = SumTree(self.capacity)
        self.rng = np.random.default_rng(seed)
        self.serials = np.full(self.capacity, -1, dtype=np.int64)
        self.pushed = 0
        self.stale_updates = 0
        self._storage = None

    @classmethod
    def from_config(cls, config: ReplayConfig, seed: Optional[int] = None) -> 'PERBuffer':
        return cls(config.capacity, config.alpha, config.priority_epsilon, seed)

    def __len__(self) -> int:
        return min(self.pushed, self.capacity)

    @property
    def count(self) -> int:
        return len(self)

    def _allocate(self, transition: Transition):
        spatial_shape = np.shape(transition.obs.spatial)
        vector_shape = np.shape(transition.obs.vector)
        self._storage = {
            'spatial': np.zeros((self.capacity,) + spatial_shape, dtype=np.float32),
            'vector': np.zeros((self.capacity,) + vector_shape, dtype=np.float32),
            'actions': np.zeros(self.capacity, dtype=np.int64),
            'rewards': np.zeros(self.capacity, dtype=np.float32),
            'next_spatial': np.zeros((self.capacity,) + spatial_shape, dtype=np.float32),
            'next_vector': np.zeros((self.capacity,) + vector_shape, dtype=np.float32),
            'dones': np.zeros(self.capacity, dtype=np.float32),
        }

    def push(self, transition: Transition):
        """Insère avec la priorité maximale courante (1.0 si vide), écrase le plus ancien si plein"""
        if not 0 <= int(transition.action) < 5:
            raise ReplayError(f"action {transition.action} hors de [0, 5)")
        if self._storage is None:
            self._allocate(transition)
        slot = self.pushed % self.capacity
        storage = self._storage
        storage['spatial'][slot] = transition.obs.spatial
        storage['vector'][slot] = transition.obs.vector
        storage['actions'][slot] = int(transition.action)
        storage['rewards'][slot] = transition.reward
        storage['next_spatial'][slot] = transition.next_obs.spatial
        storage['next_vector'][slot] = transition.next_obs.vector
        storage['dones'][slot] = float(transition.done)

        priority = self.tree.max_priority if len(self) else 1.0
        if priority <= 0:
            priority = 1.0
        self.serials[slot] = self.pushed
        self.tree.update([slot], [priority])
        self.pushed += 1

    def sample(self, batch_size: int = 64, beta: float = 0.4) -> Tuple[Batch, np.ndarray, np.ndarray]:
        """Échantillonnage stratifié : un tirage uniforme par segment de masse"""
        count = len(self)
        if count < batch_size:
            raise ReplayError(f"{count} transitions disponibles, {batch_size} demandées")

        total = self.tree.total
        segment = total / batch_size
        masses = (np.arange(batch_size) + self.rng.random(batch_size)) * segment
        slots = np.minimum(self.tree.find(masses), count - 1)

        priorities = self.tree.get(slots)
        probabilities = priorities / total
        weights = (count * probabilities) ** (-beta)
        weights = weights / weights.max()

        storage = self._storage
        batch = Batch(
            spatial=storage['spatial'][slots],
            vector=storage['vector'][slots],
            actions=storage['actions'][slots],
            rewards=storage['rewards'][slots],
            next_spatial=storage['next_spatial'][slots],
            next_vector=storage['next_vector'][slots],
            dones=storage['dones'][slots],
        )
        return batch, weights.astype(np.float32), self.serials[slots].copy()

    def priority_from_error(self, td_errors) -> np.ndarray:
        return (np.abs(np.asarray(td_errors, dtype=float)) + self.priority_epsilon) ** self.alpha

    def update_priorities(self, indices: Sequence[int], td_errors: Sequence[float]):
        """p_i ← (|δ_i| + ε)^α ; les indices périmés sont ignorés et comptés"""
        indices = np.asarray(indices, dtype=np.int64)
        priorities = self.priority_from_error(td_errors)
        slots = indices % self.capacity
        valid = (indices >= 0) & (self.serials[slots] == indices)
        stale = int((~valid).sum())
        if stale:
            self.stale_updates += stale
            logger.debug(f"{stale} mise(s) à jour de priorité ignorée(s) : emplacements réécrits")
        if valid.any():
            # doublons possibles dans un lot : la dernière valeur l'emporte
            self.tree.update(slots[valid], priorities[valid])

    def priorities(self) -> np.ndarray:
        return self.tree.get(np.arange(len(self)))

    def clear(self):
        """Réinitialisation complète (changement d'étape du curriculum)"""
        self.tree.clear()
        self.serials.fill(-1)
        self.pushed = 0
        logger.info("Tampon de rejeu réinitialisé")


def anneal_beta(global_step: int, start: float = 0.4, end: float = 1.0,
                horizon: int = 5_000_000) -> float:
    """β linéaire de start à end sur horizon pas, borné à end"""
    if horizon <= 0:
        return end
    fraction = min(max(global_step, 0) / horizon, 1.0)
    return start + (end - start) * fraction
