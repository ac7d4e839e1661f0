# api/services/reward.py
"""Assemblage de la récompense individuelle (objectif, temps, collisions, shaping, réseau)."""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    """Section `reward` de la RunConfig"""
    goal: float = 2.0
    time_step: float = -0.01
    collision: float = -1.0
    pbrs_factor: float = 0.23
    path_conflict: float = -1.0
    network_factor: float = -0.4
    discount: float = 0.99
    penalize_both: bool = False


class RewardContext(NamedTuple):
    reached_goal: bool
    collision: bool
    path_conflict: bool
    distance_before: float
    distance_after: float
    sinr_norm: float


def potential(distance: float, pbrs_factor: float) -> float:
    """Potentiel Φ(s) = -β·d_A*(s, g)"""
    return -pbrs_factor * distance


def shaping_term(distance_before: float, distance_after: float, config: RewardConfig) -> float:
    if math.isinf(distance_before) or math.isinf(distance_after):
        logger.warning(
            f"Distance A* infinie ({distance_before} -> {distance_after}) : terme de shaping annulé"
        )
        return 0.0
    return (
        config.discount * potential(distance_after, config.pbrs_factor)
        - potential(distance_before, config.pbrs_factor)
    )


def network_term(sinr_norm: float, config: RewardConfig) -> float:
    return (1.0 - sinr_norm) * config.network_factor


def compute_reward(context: RewardContext, config: RewardConfig = RewardConfig()) -> float:
    total = config.time_step
    if context.reached_goal:
        total += config.goal
    if context.collision:
        total += config.collision
    if context.path_conflict:
        total += config.path_conflict
    total += shaping_term(context.distance_before, context.distance_after, config)
    total += network_term(context.sinr_norm, config)
    return float(total)
