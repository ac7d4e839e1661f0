# api/services/orchestrator.py
"""
Orchestration acteurs / apprenant.

Les acteurs et l'apprenant ne partagent aucune mémoire : l'expérience
remonte par une file bornée (bloquante quand elle est pleine), les poids
redescendent par une file de profondeur 1 par acteur où seul le dernier
instantané est conservé, et les statistiques d'épisode passent par une
file dédiée. Un évènement d'arrêt diffusé précède la vidange des files.

Les deux déploiements (`thread` et `process`) utilisent le même contrat.
"""
import logging
import queue
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import metrics
from .exceptions import SimulationError
from .gridworld import ACTION_DELTAS, N_ACTIONS, Action, MapfEnvironment, generate_map
from .learner import Learner
from .neural import NetworkParams, greedy_actions
from .observe import stack_observations
from .radio import build_radio_map, is_blackout
from .replay import Transition

if TYPE_CHECKING:
    from .gridworld import GridMap
    from .radio import RadioMap
    from .run_config import RunConfig

logger = logging.getLogger(__name__)

BACKENDS = ('process', 'thread')
EVAL_SEED_OFFSET = 1_000_003
DELTA_ACTIONS = {delta: action for action, delta in ACTION_DELTAS.items()}


@dataclass(frozen=True)
class CurriculumStage:
    index: int
    name: str
    map_kind: str
    width: int
    height: int
    n_agents: int
    max_steps: int
    threshold: float = 0.9
    density: float = 0.2
    # nombre de cartes générées distinctes tirées au fil des épisodes
    map_pool: int = 16


def default_curriculum() -> Tuple[CurriculumStage, ...]:
    return (
        CurriculumStage(0, 'Random-32x32-2', 'random', 32, 32, 2, 200),
        CurriculumStage(1, 'Random-32x32-4', 'random', 32, 32, 4, 200),
        CurriculumStage(2, 'Room-32x32-4', 'room', 32, 32, 4, 300),
        CurriculumStage(3, 'Room-32x32-6', 'room', 32, 32, 6, 300),
        CurriculumStage(4, 'Room-32x32-8', 'room', 32, 32, 8, 300),
        CurriculumStage(5, 'Warehouse-161x63-8', 'warehouse', 161, 63, 8, 1000, map_pool=1),
    )


@dataclass(frozen=True)
class OrchestratorConfig:
    """Section `orchestrator` de la RunConfig"""
    n_actors: int = 4
    backend: str = 'process'
    start_method: str = 'spawn'
    experience_queue_size: int = 256
    # en épisodes d'acteurs terminés dans l'étape courante
    eval_every: int = 500
    n_eval: int = 50
    # en pas d'apprentissage
    checkpoint_every: int = 10_000
    graduation_strict: bool = True
    put_timeout_s: float = 0.5
    progress_every_s: float = 10.0
    max_duration_s: float = 0.0
    # pause aléatoire de l'apprenant à chaque itération (contre-pression)
    learner_jitter_s: float = 0.0


class WeightSnapshot(NamedTuple):
    version: int
    params: NetworkParams
    epsilon: float
    stage_index: int


class ExperienceRecord(NamedTuple):
    actor_id: int
    stage_index: int
    version: int
    transitions: List[Transition]


@dataclass(frozen=True)
class EvalMetrics:
    success_rate: float
    mean_makespan: float
    mean_reward: float
    mean_sinr_db: float
    blackout_steps: int
    n_episodes: int

    def as_dict(self) -> dict:
        return {
            'success_rate': self.success_rate,
            'mean_makespan': self.mean_makespan,
            'mean_reward': self.mean_reward,
            'mean_sinr_db': self.mean_sinr_db,
            'blackout_steps': self.blackout_steps,
            'n_episodes': self.n_episodes,
        }


class CurriculumDecision(Enum):
    STAY = 'stay'
    GRADUATE = 'graduate'


# ============================================================================
# FILES DE MESSAGES
# ============================================================================

class QueueSet:
    """File d'expérience bornée, une file de poids par acteur, file de statistiques, évènement d'arrêt"""

    def __init__(self, n_actors: int, experience_size: int = 256, context=None):
        if context is None:
            make_queue, make_event = queue.Queue, threading.Event
        else:
            make_queue, make_event = context.Queue, context.Event
        self.experience = make_queue(maxsize=experience_size)
        self.weights = [make_queue(maxsize=1) for _ in range(n_actors)]
        self.stats = make_queue()
        self.stop = make_event()

    @property
    def n_actors(self) -> int:
        return len(self.weights)

    def publish(self, snapshot: WeightSnapshot):
        for weight_queue in self.weights:
            replace_latest(weight_queue, snapshot)


def replace_latest(weight_queue, item):
    """Remplace le contenu d'une file de profondeur 1 (producteur unique)"""
    while True:
        try:
            weight_queue.get_nowait()
        except queue.Empty:
            pass
        try:
            weight_queue.put_nowait(item)
            return
        except queue.Full:
            continue


def latest_snapshot(weight_queue, current: Optional[WeightSnapshot]) -> Optional[WeightSnapshot]:
    while True:
        try:
            current = weight_queue.get_nowait()
        except queue.Empty:
            return current


def put_until_stopped(target_queue, item, stop, timeout: float = 0.5) -> bool:
    """Put bloquant qui abandonne uniquement sur arrêt ; renvoie False si l'élément n'a pas été remis"""
    while not stop.is_set():
        try:
            target_queue.put(item, timeout=timeout)
            return True
        except queue.Full:
            continue
    return False


def drain(source_queue, timeout: float = 0.0) -> list:
    items = []
    while True:
        try:
            items.append(source_queue.get(timeout=timeout) if timeout else source_queue.get_nowait())
        except queue.Empty:
            return items


# ============================================================================
# ENVIRONNEMENTS ET POLITIQUES
# ============================================================================

class StageEnvironmentFactory:
    """Cartes et cartes radio par (étape, graine de carte), mises en cache"""

    def __init__(self, config: 'RunConfig', seed: int = 0):
        self.config = config
        self.seed = seed
        self._grids: Dict[Tuple[int, int], 'GridMap'] = {}
        self._radios: Dict[Tuple[int, int], 'RadioMap'] = {}

    def map_seed(self, stage: CurriculumStage, episode_seed: int) -> int:
        return self.seed * 7919 + stage.index * 104_729 + episode_seed % max(stage.map_pool, 1)

    def grid(self, stage: CurriculumStage, map_seed: int) -> 'GridMap':
        key = (stage.index, map_seed)
        if key not in self._grids:
            env = self.config.environment
            self._grids[key] = generate_map(
                stage.map_kind, stage.width, stage.height, map_seed,
                density=stage.density, n_agents=stage.n_agents, config=env, cell_size_m=env.cell_size_m,
            )
        return self._grids[key]

    def radio(self, stage: CurriculumStage, map_seed: int) -> 'RadioMap':
        key = (stage.index, map_seed)
        if key not in self._radios:
            self._radios[key] = build_radio_map(self.grid(stage, map_seed), self.config.radio, seed=map_seed)
        return self._radios[key]

    def environment(self, stage: CurriculumStage, episode_seed: int) -> MapfEnvironment:
        map_seed = self.map_seed(stage, episode_seed)
        return MapfEnvironment(
            self.grid(stage, map_seed),
            self.radio(stage, map_seed),
            n_agents=stage.n_agents,
            max_steps=stage.max_steps,
            env_config=self.config.environment,
            obs_config=self.config.observation,
            reward_config=self.config.reward,
        )


def select_actions(params: NetworkParams, observations, eps: float, rng: np.random.Generator) -> List[int]:
    """ε-greedy indépendant par agent, sur l'observation locale de chacun"""
    n = len(observations)
    explore = rng.random(n) < eps
    actions = rng.integers(0, N_ACTIONS, size=n)
    if not explore.all():
        greedy = greedy_actions(params, *stack_observations(observations))
        actions = np.where(explore, actions, greedy)
    return [int(a) for a in actions]


class GreedyPolicy:
    def __init__(self, params: NetworkParams):
        self.params = params

    def act(self, env: MapfEnvironment, observations) -> List[int]:
        return [int(a) for a in greedy_actions(self.params, *stack_observations(observations))]


class AStarPolicy:
    """Chaque agent suit son chemin A* courant, sans coordination"""

    def act(self, env: MapfEnvironment, observations) -> List[int]:
        actions = []
        for agent, path in zip(env.state.agents, env.state.paths):
            idx = path.index_of(agent.pos) if path is not None else -1
            if agent.at_goal or idx < 0 or idx + 1 >= len(path.cells):
                actions.append(int(Action.STAY))
                continue
            nxt = path.cells[idx + 1]
            actions.append(int(DELTA_ACTIONS[(nxt[0] - agent.pos[0], nxt[1] - agent.pos[1])]))
        return actions


class RandomPolicy:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def act(self, env: MapfEnvironment, observations) -> List[int]:
        return [int(a) for a in self.rng.integers(0, N_ACTIONS, size=env.n_agents)]


def as_policy(policy):
    if isinstance(policy, NetworkParams):
        return GreedyPolicy(policy)
    if isinstance(policy, WeightSnapshot):
        return GreedyPolicy(policy.params)
    return policy


class EpisodeSummary(NamedTuple):
    success: bool
    makespan: int
    reward: float
    sinr_sum_db: float
    agent_steps: int
    blackout_steps: int
    history: List[Tuple[Tuple[int, int], ...]]


def run_episode(env: MapfEnvironment, policy, seed: int, starts=None, goals=None) -> EpisodeSummary:
    """Épisode complet ; SINR et coupures comptés par agent-pas aux positions atteintes"""
    observations = env.reset(seed, starts, goals)
    total_reward = 0.0
    sinr_sum, agent_steps, blackouts = 0.0, 0, 0
    threshold = env.radio.blackout_threshold_db if env.radio is not None else None
    while not env.done:
        result = env.step(policy.act(env, observations))
        total_reward += float(np.mean(result.rewards))
        if env.radio is not None:
            for pos in env.state.positions:
                value = env.radio.sinr_at(pos)
                sinr_sum += value
                blackouts += int(is_blackout(value, threshold))
        agent_steps += env.n_agents
        observations = result.observations
    return EpisodeSummary(
        success=env.state.success,
        makespan=env.state.timestep,
        reward=total_reward,
        sinr_sum_db=sinr_sum,
        agent_steps=agent_steps,
        blackout_steps=blackouts,
        history=list(env.history),
    )


def evaluate(policy, stage: CurriculumStage, n_episodes: int, seed: int, config: 'RunConfig',
             factory: Optional[StageEnvironmentFactory] = None) -> EvalMetrics:
    """Évaluation gloutonne (ε = 0) déterministe pour (politique, graines)"""
    if n_episodes < 1:
        raise SimulationError("au moins un épisode d'évaluation est requis")
    policy = as_policy(policy)
    factory = factory or StageEnvironmentFactory(config, seed=config.seed)
    summaries = []
    for episode in range(n_episodes):
        episode_seed = EVAL_SEED_OFFSET + seed * 10_007 + episode
        env = factory.environment(stage, episode_seed)
        summaries.append(run_episode(env, policy, episode_seed))

    agent_steps = sum(s.agent_steps for s in summaries)
    sinr = sum(s.sinr_sum_db for s in summaries) / agent_steps if agent_steps else float('nan')
    return EvalMetrics(
        success_rate=sum(s.success for s in summaries) / n_episodes,
        mean_makespan=float(np.mean([s.makespan for s in summaries])),
        mean_reward=float(np.mean([s.reward for s in summaries])),
        mean_sinr_db=float(sinr),
        blackout_steps=int(sum(s.blackout_steps for s in summaries)),
        n_episodes=n_episodes,
    )


def curriculum_advance(metrics_: EvalMetrics, stage: CurriculumStage, strict: bool = True) -> CurriculumDecision:
    """Passage à l'étape suivante si le taux de succès dépasse le seuil Γ_c"""
    if strict:
        passed = metrics_.success_rate > stage.threshold
    else:
        passed = metrics_.success_rate >= stage.threshold
    return CurriculumDecision.GRADUATE if passed else CurriculumDecision.STAY


# ============================================================================
# ACTEUR
# ============================================================================

def run_actor(actor_id: int, config: 'RunConfig', queues: QueueSet, seed: int = 0):
    """
    Boucle d'un acteur : épisodes ε-greedy sur l'étape de l'instantané courant,
    une transition par agent et par pas, adoption d'un instantané plus récent
    en fin d'épisode.
    """
    rng = np.random.default_rng([seed, actor_id])
    timeout = config.orchestrator.put_timeout_s
    factory = StageEnvironmentFactory(config, seed=seed)
    stages = {stage.index: stage for stage in config.curriculum}
    pushed = 0
    episode = 0
    versions = []

    snapshot = None
    while snapshot is None and not queues.stop.is_set():
        try:
            snapshot = queues.weights[actor_id].get(timeout=timeout)
        except queue.Empty:
            continue

    try:
        while snapshot is not None and not queues.stop.is_set():
            versions.append(snapshot.version)
            stage = stages[snapshot.stage_index]
            episode_seed = int(rng.integers(0, 2 ** 31 - 1))
            env = factory.environment(stage, episode_seed)
            observations = env.reset(episode_seed)
            episode_reward, sinr_sum, blackouts, steps = 0.0, 0.0, 0, 0
            interrupted = False
            while not env.done:
                actions = select_actions(snapshot.params, observations, snapshot.epsilon, rng)
                result = env.step(actions)
                done = result.outcome.success
                transitions = [
                    Transition(observations[i], actions[i], result.rewards[i], result.observations[i], done)
                    for i in range(env.n_agents)
                ]
                record = ExperienceRecord(actor_id, stage.index, snapshot.version, transitions)
                if not put_until_stopped(queues.experience, record, queues.stop, timeout):
                    interrupted = True
                    break
                pushed += len(transitions)
                steps += 1
                episode_reward += float(np.mean(result.rewards))
                for pos in env.state.positions:
                    value = env.radio.sinr_at(pos)
                    sinr_sum += value
                    blackouts += int(value < env.radio.blackout_threshold_db)
                observations = result.observations
            if interrupted:
                break

            queues.stats.put({
                'kind': 'episode',
                'actor_id': actor_id,
                'episode': episode,
                'stage': stage.index,
                'version': snapshot.version,
                'steps': steps,
                'reward': episode_reward,
                'success': bool(env.state.success),
                'mean_sinr_db': sinr_sum / max(steps * env.n_agents, 1),
                'blackouts': blackouts,
                'transitions': steps * env.n_agents,
            })
            episode += 1
            snapshot = latest_snapshot(queues.weights[actor_id], snapshot)
    except Exception as e:
        logger.error(f"Acteur {actor_id} arrêté sur erreur : {e}", exc_info=True)
        queues.stats.put({'kind': 'error', 'actor_id': actor_id, 'error': str(e)})
    finally:
        queues.stats.put({
            'kind': 'final',
            'actor_id': actor_id,
            'episodes': episode,
            'transitions_pushed': pushed,
            'versions': versions,
        })


# ============================================================================
# APPRENANT ET CURRICULUM
# ============================================================================

class Orchestrator:
    """
    Pilote un apprenant et K acteurs. L'apprenant tourne dans le fil
    appelant : il vide la file d'expérience dans le tampon priorisé,
    apprend au prorata des transitions reçues, publie les instantanés,
    évalue et fait progresser le curriculum.
    """

    def __init__(self, config: 'RunConfig', checkpoint_dir=None, metrics_dir=None,
                 stage_index: int = 0, learner: Optional[Learner] = None,
                 on_evaluation: Optional[Callable] = None, on_progress: Optional[Callable] = None):
        self.config = config
        self.settings = config.orchestrator
        if self.settings.backend not in BACKENDS:
            raise SimulationError(f"backend inconnu : {self.settings.backend} (attendu : {', '.join(BACKENDS)})")
        if not config.curriculum:
            raise SimulationError("curriculum vide")
        if not 0 <= stage_index < len(config.curriculum):
            raise SimulationError(f"étape {stage_index} hors du curriculum (0..{len(config.curriculum) - 1})")
        self.stage_index = stage_index
        self.learner = learner or Learner(config.learner, config.replay, config.network, seed=config.seed)
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.metrics_dir = Path(metrics_dir) if metrics_dir else None
        self.on_evaluation = on_evaluation
        self.on_progress = on_progress
        self.eval_factory = StageEnvironmentFactory(config, seed=config.seed)
        self.rng = np.random.default_rng([config.seed, 7])

        self.queues: Optional[QueueSet] = None
        self.workers = []
        self.finished = False
        self.status = 'pending'
        self.transitions_consumed = 0
        self.transitions_discarded = 0
        self.residue = 0
        self.pushed_by_actor: Dict[int, int] = {}
        self.versions_by_actor: Dict[int, List[int]] = {}
        self.actor_errors: List[str] = []
        self.episodes = 0
        self.episodes_since_eval = 0
        self.evaluations: List[dict] = []
        self.progress: List[Tuple[float, int, int]] = []
        self.last_checkpoint: Optional[Path] = None
        self._last_publish_step = 0
        self._last_checkpoint_step = 0
        self._started_at = None
        self._last_progress = None

    @property
    def stage(self) -> CurriculumStage:
        return self.config.curriculum[self.stage_index]

    # ------------------------------------------------------------------ cycle

    def _context(self):
        if self.settings.backend == 'thread':
            return None
        import multiprocessing
        return multiprocessing.get_context(self.settings.start_method)

    def start(self):
        context = self._context()
        self.queues = QueueSet(self.settings.n_actors, self.settings.experience_queue_size, context)
        self.publish()
        for actor_id in range(self.settings.n_actors):
            args = (actor_id, self.config, self.queues, self.config.seed)
            if context is None:
                worker = threading.Thread(target=run_actor, args=args, name=f'actor-{actor_id}', daemon=True)
            else:
                worker = context.Process(target=run_actor, args=args, name=f'actor-{actor_id}', daemon=True)
            worker.start()
            self.workers.append(worker)
        self._started_at = time.monotonic()
        self._last_progress = self._started_at
        self.status = 'running'
        logger.info(
            f"Entraînement démarré : {self.settings.n_actors} acteur(s) ({self.settings.backend}), "
            f"étape {self.stage.index} {self.stage.name}"
        )

    def publish(self):
        version = self.learner.publish()
        snapshot = WeightSnapshot(version, self.learner.params, self.learner.epsilon, self.stage_index)
        self.queues.publish(snapshot)
        self._last_publish_step = self.learner.global_step
        logger.debug(f"Instantané v{version} publié (ε = {snapshot.epsilon:.3f}, étape {self.stage_index})")

    def run(self, duration_s: Optional[float] = None) -> dict:
        """Démarre, fait tourner l'apprenant jusqu'à la fin du curriculum ou du délai, puis arrête proprement"""
        duration_s = duration_s if duration_s is not None else (self.settings.max_duration_s or None)
        self.start()
        try:
            self.run_learner(duration_s)
            self.status = 'completed' if self.finished else 'stopped'
        except KeyboardInterrupt:
            logger.warning("Entraînement interrompu par l'utilisateur")
            self.status = 'stopped'
        except Exception as e:
            logger.error(f"Erreur dans la boucle d'apprentissage : {e}", exc_info=True)
            self.status = 'failed'
            raise
        finally:
            self.shutdown()
        return self.summary()

    def run_learner(self, duration_s: Optional[float] = None):
        deadline = self._started_at + duration_s if duration_s else None
        while not self.finished:
            if deadline is not None and time.monotonic() >= deadline:
                break
            self.learner_iteration()

    def learner_iteration(self) -> int:
        """Une itération : vidange, apprentissage, publication, statistiques, évaluation"""
        records = drain(self.queues.experience)
        if not records:
            try:
                records = [self.queues.experience.get(timeout=0.05)]
            except queue.Empty:
                records = []
        for record in records:
            self._consume(record)

        steps = self.learner.learn()
        publish_every = self.config.learner.publish_every
        if self.learner.global_step // publish_every > self._last_publish_step // publish_every:
            self.publish()
        checkpoint_every = self.settings.checkpoint_every
        if (self.checkpoint_dir is not None and checkpoint_every
                and self.learner.global_step // checkpoint_every > self._last_checkpoint_step // checkpoint_every):
            self.save_checkpoint(f'checkpoint-{self.learner.global_step:08d}.npz')

        self._handle_stats(drain(self.queues.stats))
        self._check_workers()
        if self.episodes_since_eval >= self.settings.eval_every:
            self.evaluate_and_advance()
        self._log_progress()
        if self.settings.learner_jitter_s:
            time.sleep(self.rng.uniform(0, self.settings.learner_jitter_s))
        return steps

    def _consume(self, record: ExperienceRecord):
        count = len(record.transitions)
        self.transitions_consumed += count
        if record.stage_index != self.stage_index:
            self.transitions_discarded += count
            return
        self.learner.ingest(record.transitions)

    def _handle_stats(self, items: Sequence[dict]):
        episodes = []
        for item in items:
            kind = item.get('kind')
            if kind == 'episode':
                self.episodes += 1
                if item['stage'] == self.stage_index:
                    self.episodes_since_eval += 1
                episodes.append({k: v for k, v in item.items() if k != 'kind'})
            elif kind == 'final':
                self.pushed_by_actor[item['actor_id']] = item['transitions_pushed']
                self.versions_by_actor[item['actor_id']] = list(item['versions'])
            elif kind == 'error':
                self.actor_errors.append(f"acteur {item['actor_id']} : {item['error']}")
        if episodes and self.metrics_dir is not None:
            metrics.write_metrics(episodes, self.metrics_dir / 'episodes.csv')

    def _check_workers(self):
        if self.actor_errors:
            raise SimulationError('; '.join(self.actor_errors))
        for worker in self.workers:
            exitcode = getattr(worker, 'exitcode', None)
            if exitcode not in (None, 0):
                raise SimulationError(f"{worker.name} terminé avec le code {exitcode}")

    def _log_progress(self, force: bool = False):
        now = time.monotonic()
        if not force and now - self._last_progress < self.settings.progress_every_s:
            return
        self._last_progress = now
        entry = (now - self._started_at, self.transitions_consumed, self.learner.global_step)
        self.progress.append(entry)
        record = self.learner.curve_record()
        record.update({'elapsed_s': entry[0], 'stage': self.stage_index, 'episodes': self.episodes})
        if self.metrics_dir is not None:
            metrics.write_metrics([record], self.metrics_dir / 'learning.csv')
        logger.info(
            f"t={entry[0]:.0f}s pas env={entry[1]} pas appr={entry[2]} ε={record['epsilon']:.3f} "
            f"tampon={record['buffer_size']} perte={record['loss']:.4f}"
        )
        if self.on_progress is not None:
            self.on_progress(self)

    def evaluate_and_advance(self) -> CurriculumDecision:
        stage = self.stage
        result = evaluate(
            self.learner.params, stage, self.settings.n_eval, seed=len(self.evaluations),
            config=self.config, factory=self.eval_factory,
        )
        decision = curriculum_advance(result, stage, self.settings.graduation_strict)
        entry = {
            'stage': stage.index,
            'learn_step': self.learner.global_step,
            'decision': decision.value,
            **result.as_dict(),
        }
        self.evaluations.append(entry)
        self.episodes_since_eval = 0
        logger.info(
            f"Évaluation étape {stage.index} ({stage.name}) : succès {result.success_rate:.2f} "
            f"(seuil {stage.threshold}), makespan {result.mean_makespan:.1f} -> {decision.value}"
        )
        if self.metrics_dir is not None:
            metrics.write_metrics([entry], self.metrics_dir / 'evaluations.csv')
        if self.on_evaluation is not None:
            self.on_evaluation(self, result, decision)
        if decision is CurriculumDecision.GRADUATE:
            self.graduate()
        return decision

    def graduate(self):
        if self.stage_index + 1 >= len(self.config.curriculum):
            logger.info(f"Dernière étape {self.stage.name} validée : curriculum terminé")
            self.finished = True
            return
        self.stage_index += 1
        self.learner.reset_buffer()
        self.publish()
        logger.info(f"Passage à l'étape {self.stage.index} ({self.stage.name}), tampon réinitialisé")

    # ------------------------------------------------------------------ arrêt

    def shutdown(self):
        """Arrêt diffusé, vidange des files pendant la jonction des acteurs, point de sauvegarde final"""
        if self.queues is None:
            return
        self.queues.stop.set()
        stats = []
        while any(worker.is_alive() for worker in self.workers):
            self.residue += sum(len(r.transitions) for r in drain(self.queues.experience))
            stats.extend(drain(self.queues.stats))
            for worker in self.workers:
                worker.join(timeout=0.05)
        self.residue += sum(len(r.transitions) for r in drain(self.queues.experience, timeout=0.1))
        stats.extend(drain(self.queues.stats, timeout=0.1))
        self._handle_stats(stats)
        self._log_progress(force=True)
        if self.checkpoint_dir is not None:
            self.save_checkpoint('final.npz')
        logger.info(
            f"Entraînement arrêté ({self.status}) : {self.transitions_consumed} transitions consommées, "
            f"{self.residue} en résidu, {self.learner.global_step} pas d'apprentissage"
        )
        self.workers = []

    def save_checkpoint(self, name: str) -> Path:
        self._last_checkpoint_step = self.learner.global_step
        self.last_checkpoint = self.learner.save(
            self.checkpoint_dir / name,
            extra={'stage_index': self.stage_index, 'stage_name': self.stage.name},
        )
        return self.last_checkpoint

    def resume(self, path):
        extra = self.learner.restore(path)
        stage_index = int(extra.get('stage_index', self.stage_index))
        if 0 <= stage_index < len(self.config.curriculum):
            self.stage_index = stage_index
        self._last_publish_step = self.learner.global_step
        self._last_checkpoint_step = self.learner.global_step
        logger.info(f"Reprise à l'étape {self.stage_index} depuis {path}")

    # ------------------------------------------------------------------ bilan

    @property
    def transitions_pushed(self) -> int:
        return sum(self.pushed_by_actor.values())

    def versions_monotonic(self) -> bool:
        return all(
            all(a <= b for a, b in zip(versions, versions[1:]))
            for versions in self.versions_by_actor.values()
        )

    def summary(self) -> dict:
        return {
            'status': self.status,
            'stage_index': self.stage_index,
            'stage_name': self.stage.name,
            'finished': self.finished,
            'learn_steps': self.learner.global_step,
            'env_steps': self.transitions_consumed,
            'transitions_pushed': self.transitions_pushed,
            'transitions_discarded': self.transitions_discarded,
            'residue': self.residue,
            'episodes': self.episodes,
            'evaluations': len(self.evaluations),
            'snapshot_version': self.learner.version,
            'versions_monotonic': self.versions_monotonic(),
            'stale_priority_updates': self.learner.buffer.stale_updates,
            'checkpoint': str(self.last_checkpoint) if self.last_checkpoint else None,
        }
