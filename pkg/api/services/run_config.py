# api/services/run_config.py
"""
Configuration d'exécution (RunConfig) : tous les réglages des modules,
regroupés en sections nommées, chargés depuis un document YAML.

La validation passe par les serializers DRF de `api.serializers` : clés
inconnues refusées, clés absentes remplacées par les valeurs par défaut des
dataclasses, toutes les violations remontées ensemble dans une ConfigError.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import yaml

from .bench import BenchConfig
from .exceptions import ConfigError
from .gridworld import EnvironmentConfig
from .learner import LearnerConfig
from .neural import NetworkSpec
from .observe import ObservationConfig
from .orchestrator import CurriculumStage, OrchestratorConfig, default_curriculum
from .radio import Deployment, Site
from .replay import ReplayConfig
from .reward import RewardConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

SECTIONS = {
    'environment': EnvironmentConfig,
    'radio': Deployment,
    'observation': ObservationConfig,
    'reward': RewardConfig,
    'replay': ReplayConfig,
    'network': NetworkSpec,
    'learner': LearnerConfig,
    'orchestrator': OrchestratorConfig,
    'bench': BenchConfig,
}
TOP_LEVEL_KEYS = ('schema_version', 'seed', 'curriculum') + tuple(SECTIONS)


@dataclass(frozen=True)
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    radio: Deployment = field(default_factory=Deployment)
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    orchestrator: OrchestratorConfig = field(default_factory=OrchestratorConfig)
    curriculum: Tuple[CurriculumStage, ...] = field(default_factory=default_curriculum)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def stage(self, index: int) -> CurriculumStage:
        for stage in self.curriculum:
            if stage.index == index:
                return stage
        raise ConfigError(f"étape {index} absente du curriculum")

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def with_overrides(self, **sections) -> 'RunConfig':
        return dataclasses.replace(self, **sections)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _flatten_errors(prefix: str, detail) -> List[str]:
    if isinstance(detail, dict):
        messages = []
        for key, value in detail.items():
            name = prefix if key == 'non_field_errors' else f'{prefix}.{key}'
            messages.extend(_flatten_errors(name, value))
        return messages
    if isinstance(detail, list):
        if all(not isinstance(item, (dict, list)) for item in detail):
            return [f'{prefix}: {item}' for item in detail]
        messages = []
        for i, item in enumerate(detail):
            if item:
                messages.extend(_flatten_errors(f'{prefix}[{i}]', item))
        return messages
    return [f'{prefix}: {detail}']


def build_section(cls, values: Mapping[str, Any]):
    kwargs = {}
    for name, value in values.items():
        if name == 'sites':
            value = tuple(Site(**dict(site)) for site in value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: Optional[Mapping[str, Any]]) -> RunConfig:
    """Valide un document complet ; lève ConfigError avec la liste exhaustive des violations"""
    from ..serializers import CONFIG_SECTION_SERIALIZERS, CurriculumStageConfigSerializer

    data = {} if data is None else data
    if not isinstance(data, Mapping):
        raise ConfigError(f"le document de configuration doit être un dictionnaire, {type(data).__name__} reçu")

    errors: List[str] = []
    for key in data:
        if key not in TOP_LEVEL_KEYS:
            errors.append(f"{key}: clé inconnue")

    version = data.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        errors.append(f"schema_version: version {version!r} non prise en charge (attendu {SCHEMA_VERSION})")
    seed = data.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(f"seed: entier positif attendu, {seed!r} reçu")

    sections = {}
    for name, cls in SECTIONS.items():
        values = data.get(name) or {}
        if not isinstance(values, Mapping):
            errors.append(f"{name}: dictionnaire attendu")
            continue
        serializer = CONFIG_SECTION_SERIALIZERS[name](data=values)
        if serializer.is_valid():
            sections[name] = build_section(cls, serializer.validated_data)
        else:
            errors.extend(_flatten_errors(name, serializer.errors))

    curriculum = default_curriculum()
    if data.get('curriculum') is not None:
        raw = data['curriculum']
        if not isinstance(raw, list) or not raw:
            errors.append("curriculum: liste non vide d'étapes attendue")
        else:
            stages = []
            for position, entry in enumerate(raw):
                if not isinstance(entry, Mapping):
                    errors.append(f"curriculum[{position}]: dictionnaire attendu")
                    continue
                entry = dict(entry)
                entry.setdefault('index', position)
                serializer = CurriculumStageConfigSerializer(data=entry)
                if not serializer.is_valid():
                    errors.extend(_flatten_errors(f'curriculum[{position}]', serializer.errors))
                    continue
                stage = CurriculumStage(**serializer.validated_data)
                if stage.index != position:
                    errors.append(f"curriculum[{position}].index: {stage.index} reçu, étapes strictement ordonnées attendues")
                stages.append(stage)
            curriculum = tuple(stages)

    if not errors:
        network = sections['network']
        observation = sections['observation']
        if network.view_size != observation.view_size:
            errors.append(
                f"network.view_size: {network.view_size} différent du champ de vision {observation.view_size}"
            )
        if network.vector_dim != observation.vector_size:
            errors.append(
                f"network.vector_dim: {network.vector_dim} différent du vecteur d'observation {observation.vector_size}"
            )
        if network.in_channels != 4:
            errors.append(f"network.in_channels: 4 canaux d'observation, {network.in_channels} reçu")
        # un seul γ pour le shaping et les cibles DDQN
        discount, gamma = sections['reward'].discount, sections['learner'].gamma
        if discount != gamma:
            errors.append(f"reward.discount: {discount} différent de learner.gamma {gamma}")

    if errors:
        raise ConfigError(errors)
    return RunConfig(schema_version=SCHEMA_VERSION, seed=seed, curriculum=curriculum, **sections)


def loads_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML invalide : {e}") from e
    return config_from_dict(data)


def load_config(path=None) -> RunConfig:
    """RunConfig depuis un fichier YAML ; sans chemin, toutes les valeurs par défaut"""
    if path is None:
        return config_from_dict({})
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"lecture impossible de {path} : {e}") from e
    config = loads_config(text)
    logger.debug(f"Configuration chargée depuis {path}")
    return config


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False, allow_unicode=True)


def write_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding='utf-8')
    return path
