# api/services/learner.py
"""
Double DQN sur lots priorisés : cibles, pas d'apprentissage, calendrier d'ε.

Les compteurs d'ε et de β avancent avec le nombre de transitions
d'environnement consommées par l'apprenant, pas avec les pas de gradient.
"""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Optional

import numpy as np

from .exceptions import ShapeError
from .neural import (
    NetworkParams,
    NetworkSpec,
    OptimizerState,
    adamw_step,
    backward,
    clip_gradients,
    forward,
    global_norm,
    huber_loss_and_grad,
    init_network,
    init_optimizer,
    load_checkpoint,
    polyak_update,
    save_checkpoint,
)
from .replay import Batch, PERBuffer, ReplayConfig, Transition, anneal_beta

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LearnerConfig:
    """Section `learner` de la RunConfig"""
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 64
    max_grad_norm: float = 1.0
    huber_delta: float = 1.0
    epsilon_start: float = 1.0
    epsilon_end: float = 0.1
    epsilon_decay_steps: int = 5_000_000
    learning_starts: int = 5000
    publish_every: int = 100
    # transitions consommées par pas d'apprentissage
    transitions_per_learn_step: float = 4.0


@dataclass
class LearnerState:
    theta: NetworkParams
    target: NetworkParams
    opt: OptimizerState
    global_step: int = 0
    config: LearnerConfig = LearnerConfig()


class LearnResult(NamedTuple):
    state: LearnerState
    td_errors: np.ndarray
    loss: float
    grad_norm: float


def epsilon(global_step: int, start: float = 1.0, end: float = 0.1, horizon: int = 5_000_000) -> float:
    """Décroissance linéaire de start à end sur horizon pas, bornée"""
    if horizon <= 0:
        return end
    fraction = min(max(global_step, 0) / horizon, 1.0)
    return start + (end - start) * fraction


def ddqn_targets_from_q(rewards, dones, q_online_next, q_target_next, gamma: float = 0.99) -> np.ndarray:
    """y = r + γ(1 − d)·Q_θ⁻(o′, argmax_a′ Q_θ(o′, a′)) ; y = r exactement si d = 1"""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones)
    q_online_next = np.asarray(q_online_next)
    q_target_next = np.asarray(q_target_next)
    if q_online_next.shape != q_target_next.shape or q_online_next.shape[0] != rewards.shape[0]:
        raise ShapeError(
            f"valeurs Q {q_online_next.shape} / {q_target_next.shape} pour {rewards.shape[0]} récompenses"
        )
    selected = np.argmax(q_online_next, axis=1)
    evaluated = q_target_next[np.arange(len(selected)), selected].astype(np.float64)
    bootstrapped = rewards + gamma * evaluated
    return np.where(dones.astype(bool), rewards, bootstrapped)


def ddqn_targets(batch: Batch, theta: NetworkParams, target: NetworkParams, gamma: float = 0.99) -> np.ndarray:
    if len(batch) == 0:
        raise ShapeError("lot vide")
    q_online_next, _ = forward(theta, batch.next_spatial, batch.next_vector)
    q_target_next, _ = forward(target, batch.next_spatial, batch.next_vector)
    return ddqn_targets_from_q(batch.rewards, batch.dones, q_online_next, q_target_next, gamma)


def init_learner(seed: int, config: LearnerConfig = LearnerConfig(), spec: NetworkSpec = NetworkSpec(),
                 dtype=np.float32) -> LearnerState:
    theta = init_network(seed, spec, dtype)
    return LearnerState(
        theta=theta,
        target=theta.copy(),
        opt=init_optimizer(theta, lr=config.lr, weight_decay=config.weight_decay),
        global_step=0,
        config=config,
    )


def learn_step(state: LearnerState, batch: Batch, is_weights=None, indices=None,
               replay: Optional[PERBuffer] = None) -> LearnResult:
    """
    Un pas complet : cibles DDQN, erreurs TD, perte de Huber pondérée,
    rétropropagation, écrêtage, AdamW, Polyak puis mise à jour des priorités.
    """
    config = state.config
    q_values, cache = forward(state.theta, batch.spatial, batch.vector)
    rows = np.arange(len(batch))
    actions = np.asarray(batch.actions, dtype=np.int64)
    if actions.shape != rows.shape:
        raise ShapeError(f"{actions.shape[0]} actions pour un lot de {len(rows)}")

    targets = ddqn_targets(batch, state.theta, state.target, config.gamma)
    taken = q_values[rows, actions].astype(np.float64)
    td_errors = targets - taken
    loss, grad_taken = huber_loss_and_grad(taken, targets, is_weights, config.huber_delta)

    grad_q = np.zeros_like(q_values)
    grad_q[rows, actions] = grad_taken
    grads = backward(state.theta, cache, grad_q)
    grad_norm = global_norm(grads)
    grads = clip_gradients(grads, config.max_grad_norm)

    theta, opt = adamw_step(state.theta, grads, state.opt)
    target = polyak_update(state.target, theta, config.tau)
    if replay is not None and indices is not None:
        replay.update_priorities(indices, td_errors)

    new_state = replace(state, theta=theta, target=target, opt=opt, global_step=state.global_step + 1)
    return LearnResult(new_state, td_errors, loss, grad_norm)


class Learner:
    """
    Regroupe l'état DDQN, le tampon priorisé et la comptabilité de
    consommation : les pas d'apprentissage sont crédités par les transitions
    reçues, sans données aucun pas n'a lieu.
    """

    def __init__(self, config: LearnerConfig = LearnerConfig(), replay_config: ReplayConfig = ReplayConfig(),
                 spec: NetworkSpec = NetworkSpec(), seed: int = 0, dtype=np.float32):
        self.config = config
        self.replay_config = replay_config
        self.state = init_learner(seed, config, spec, dtype)
        self.buffer = PERBuffer.from_config(replay_config, seed)
        self.transitions_consumed = 0
        self.learn_credit = 0.0
        self.version = 0
        self.last_loss = math.nan
        self.last_grad_norm = math.nan

    @property
    def global_step(self) -> int:
        return self.state.global_step

    @property
    def params(self) -> NetworkParams:
        return self.state.theta

    @property
    def epsilon(self) -> float:
        return epsilon(
            self.transitions_consumed, self.config.epsilon_start,
            self.config.epsilon_end, self.config.epsilon_decay_steps,
        )

    @property
    def beta(self) -> float:
        horizon = self.replay_config.beta_horizon or self.config.epsilon_decay_steps
        return anneal_beta(
            self.transitions_consumed, self.replay_config.beta_start, self.replay_config.beta_end, horizon,
        )

    @property
    def warmed_up(self) -> bool:
        return len(self.buffer) >= max(self.config.learning_starts, self.config.batch_size)

    def ingest(self, transitions: Iterable[Transition]) -> int:
        count = 0
        for transition in transitions:
            self.buffer.push(transition)
            count += 1
        self.transitions_consumed += count
        if self.warmed_up:
            self.learn_credit += count / self.config.transitions_per_learn_step
        return count

    def learn(self, max_steps: Optional[int] = None) -> int:
        """Consomme le crédit disponible ; renvoie le nombre de pas effectués"""
        performed = 0
        while self.learn_credit >= 1.0 and self.warmed_up:
            if max_steps is not None and performed >= max_steps:
                break
            batch, weights, indices = self.buffer.sample(self.config.batch_size, self.beta)
            result = learn_step(self.state, batch, weights, indices, self.buffer)
            self.state = result.state
            self.last_loss = result.loss
            self.last_grad_norm = result.grad_norm
            self.learn_credit -= 1.0
            performed += 1
        return performed

    def should_publish(self) -> bool:
        return self.global_step > 0 and self.global_step % self.config.publish_every == 0

    def publish(self) -> int:
        self.version += 1
        return self.version

    def reset_buffer(self):
        self.buffer.clear()
        self.learn_credit = 0.0

    def curve_record(self) -> dict:
        return {
            'step': self.global_step,
            'env_steps': self.transitions_consumed,
            'loss': self.last_loss,
            'grad_norm': self.last_grad_norm,
            'epsilon': self.epsilon,
            'beta': self.beta,
            'buffer_size': len(self.buffer),
        }

    def save(self, path, extra: Optional[dict] = None) -> Path:
        extra = dict(extra or {})
        extra.update({
            'transitions_consumed': self.transitions_consumed,
            'version': self.version,
        })
        return save_checkpoint(
            path, self.state.theta, self.state.target, self.state.opt, self.global_step, extra,
        )

    def restore(self, path) -> dict:
        """Recharge réseaux, optimiseur et compteurs ; le tampon reste vide"""
        checkpoint = load_checkpoint(path)
        if checkpoint.params.spec != self.state.theta.spec:
            logger.warning(f"Architecture du point de sauvegarde {path} différente de la configuration")
        self.state = LearnerState(
            theta=checkpoint.params,
            target=checkpoint.target,
            opt=checkpoint.optimizer,
            global_step=checkpoint.global_step,
            config=self.config,
        )
        self.transitions_consumed = int(checkpoint.extra.get('transitions_consumed', 0))
        self.version = int(checkpoint.extra.get('version', 0))
        logger.info(f"Apprenant restauré depuis {path} au pas {self.global_step}")
        return checkpoint.extra
