# api/serializers.py
from collections.abc import Mapping

from rest_framework import serializers
from .models import TrainingRun, EvaluationRecord, BenchmarkReport, ActivityLog
from .services.gridworld import MAP_KINDS, N_ACTIONS
from .services.orchestrator import BACKENDS


# ============================================================================
# SERIALIZERS DE BASE
# ============================================================================

class StrictSerializer(serializers.Serializer):
    """Serializer qui refuse les clés inconnues, en plus des erreurs de champ"""

    def to_internal_value(self, data):
        errors = {}
        if isinstance(data, Mapping):
            for key in data:
                if key not in self.fields:
                    errors[str(key)] = ['Clé inconnue.']
        try:
            value = super().to_internal_value(data)
        except serializers.ValidationError as exc:
            if not isinstance(exc.detail, dict):
                raise
            errors.update(exc.detail)
            value = None
        if errors:
            raise serializers.ValidationError(errors)
        return value


def _strictly_positive(value, label='La valeur'):
    if value <= 0:
        raise serializers.ValidationError(f"{label} doit être strictement positive")
    return value


def _optional_float(**kwargs):
    return serializers.FloatField(required=False, **kwargs)


def _optional_int(**kwargs):
    return serializers.IntegerField(required=False, **kwargs)


# ============================================================================
# SECTIONS DE LA CONFIGURATION D'EXÉCUTION
# ============================================================================

class EnvironmentConfigSerializer(StrictSerializer):
    swap_fraction = _optional_float(min_value=0.0, max_value=1.0,
                                    help_text="Fraction des agents dont l'objectif est le départ d'un autre")
    density = _optional_float(min_value=0.0, max_value=0.9)
    forbid_swaps = serializers.BooleanField(required=False)
    wall_bump_collision = serializers.BooleanField(required=False)
    room_min_side = _optional_int(min_value=3)
    max_map_retries = _optional_int(min_value=0)
    warehouse_map_path = serializers.CharField(required=False, allow_blank=True)
    cell_size_m = _optional_float()

    def validate_cell_size_m(self, value):
        return _strictly_positive(value, "La taille de cellule")


class SiteConfigSerializer(StrictSerializer):
    x_m = serializers.FloatField()
    y_m = serializers.FloatField()
    height_m = _optional_float(min_value=0.0)
    azimuth_offset_deg = _optional_float()


class RadioConfigSerializer(StrictSerializer):
    sites = SiteConfigSerializer(many=True, required=False,
                                 help_text="Sites de stations de base ; vide = un site au centre de la carte")
    sector_azimuths_deg = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    tx_power_dbm = _optional_float()
    carrier_ghz = _optional_float()
    bandwidth_hz = _optional_float()
    max_gain_dbi = _optional_float()
    downtilt_deg = _optional_float(min_value=0.0, max_value=90.0)
    h_beamwidth_deg = _optional_float()
    v_beamwidth_deg = _optional_float()
    agent_height_m = _optional_float(min_value=0.0)
    agent_antenna_gain_dbi = _optional_float()
    shadow_sigma_los_db = _optional_float(min_value=0.0)
    shadow_sigma_nlos_db = _optional_float(min_value=0.0)
    decorr_los_m = _optional_float()
    decorr_nlos_m = _optional_float()
    bs_noise_fig_db = _optional_float(min_value=0.0)
    agent_noise_fig_db = _optional_float(min_value=0.0)
    wall_loss_db = _optional_float(min_value=0.0)
    blackout_threshold_db = _optional_float()
    sinr_max_db = _optional_float()
    mcs_thresholds_db = serializers.ListField(child=serializers.FloatField(), required=False, min_length=1)
    mcs_efficiencies = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False, min_length=1)

    def validate_carrier_ghz(self, value):
        return _strictly_positive(value, "La fréquence porteuse")

    def validate_bandwidth_hz(self, value):
        return _strictly_positive(value, "La bande passante")

    def validate_h_beamwidth_deg(self, value):
        return _strictly_positive(value, "L'ouverture horizontale")

    def validate_v_beamwidth_deg(self, value):
        return _strictly_positive(value, "L'ouverture verticale")

    def validate_decorr_los_m(self, value):
        return _strictly_positive(value, "La distance de décorrélation")

    def validate_decorr_nlos_m(self, value):
        return _strictly_positive(value, "La distance de décorrélation")

    def validate_mcs_thresholds_db(self, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("Les seuils MCS doivent être strictement croissants")
        return value

    def validate(self, data):
        from .services.radio import BLACKOUT_THRESHOLD_DB, SINR_MAX_DB, DEFAULT_MCS_THRESHOLDS_DB, DEFAULT_MCS_EFFICIENCIES

        errors = {}
        threshold = data.get('blackout_threshold_db', BLACKOUT_THRESHOLD_DB)
        sinr_max = data.get('sinr_max_db', SINR_MAX_DB)
        if sinr_max <= threshold:
            errors['sinr_max_db'] = f'Le plafond SINR ({sinr_max} dB) doit dépasser le seuil de coupure ({threshold} dB)'
        thresholds = data.get('mcs_thresholds_db', DEFAULT_MCS_THRESHOLDS_DB)
        efficiencies = data.get('mcs_efficiencies', DEFAULT_MCS_EFFICIENCIES)
        # débit nul exactement en coupure
        if thresholds[0] != threshold:
            errors['mcs_thresholds_db'] = (
                f'Le premier seuil MCS ({thresholds[0]} dB) doit être égal au seuil de coupure ({threshold} dB)'
            )
        if len(thresholds) != len(efficiencies):
            errors['mcs_efficiencies'] = f'{len(efficiencies)} efficacités pour {len(thresholds)} seuils MCS'
        if errors:
            raise serializers.ValidationError(errors)
        return data


class ObservationConfigSerializer(StrictSerializer):
    fov_radius = _optional_int(min_value=1, help_text="Rayon du champ de vision (vue de 2r+1 cellules)")
    waypoint_steps = _optional_int(min_value=1)
    communicated_steps = _optional_int(min_value=1)
    comm_range_factor = _optional_float(min_value=0.0)
    network_aware = serializers.BooleanField(required=False)
    blackout_blocks_comm = serializers.BooleanField(required=False)


class RewardConfigSerializer(StrictSerializer):
    goal = _optional_float()
    time_step = _optional_float(max_value=0.0)
    collision = _optional_float(max_value=0.0)
    pbrs_factor = _optional_float(min_value=0.0)
    path_conflict = _optional_float(max_value=0.0)
    network_factor = _optional_float(max_value=0.0)
    discount = _optional_float(min_value=0.0, max_value=1.0)
    penalize_both = serializers.BooleanField(required=False)

    def validate_goal(self, value):
        return _strictly_positive(value, "La récompense d'objectif")


class ReplayConfigSerializer(StrictSerializer):
    capacity = _optional_int(min_value=1)
    alpha = _optional_float(min_value=0.0)
    priority_epsilon = _optional_float()
    beta_start = _optional_float(min_value=0.0, max_value=1.0)
    beta_end = _optional_float(min_value=0.0, max_value=1.0)
    beta_horizon = _optional_int(min_value=0, help_text="0 = horizon de décroissance d'epsilon")

    def validate_priority_epsilon(self, value):
        return _strictly_positive(value, "L'epsilon de priorité")


class NetworkConfigSerializer(StrictSerializer):
    in_channels = _optional_int(min_value=1)
    view_size = _optional_int(min_value=1)
    vector_dim = _optional_int(min_value=1)
    conv_filters = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, min_length=1)
    kernel_size = _optional_int(min_value=1)
    vector_hidden = _optional_int(min_value=1)
    merge_hidden = _optional_int(min_value=1)
    n_actions = _optional_int()
    waypoint_scale = _optional_float()

    def validate_kernel_size(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError("Le noyau de convolution doit être de taille impaire")
        return value

    def validate_n_actions(self, value):
        if value != N_ACTIONS:
            raise serializers.ValidationError(f"La tête de sortie doit avoir {N_ACTIONS} actions")
        return value

    def validate_waypoint_scale(self, value):
        return _strictly_positive(value, "L'échelle des points de passage")


class LearnerConfigSerializer(StrictSerializer):
    gamma = _optional_float(min_value=0.0, max_value=1.0)
    tau = _optional_float(max_value=1.0)
    lr = _optional_float()
    weight_decay = _optional_float(min_value=0.0)
    batch_size = _optional_int(min_value=1)
    max_grad_norm = _optional_float()
    huber_delta = _optional_float()
    epsilon_start = _optional_float(min_value=0.0, max_value=1.0)
    epsilon_end = _optional_float(min_value=0.0, max_value=1.0)
    epsilon_decay_steps = _optional_int(min_value=1)
    learning_starts = _optional_int(min_value=0)
    publish_every = _optional_int(min_value=1)
    transitions_per_learn_step = _optional_float()

    def validate_tau(self, value):
        return _strictly_positive(value, "Le coefficient de Polyak")

    def validate_lr(self, value):
        return _strictly_positive(value, "Le taux d'apprentissage")

    def validate_max_grad_norm(self, value):
        return _strictly_positive(value, "La norme maximale")

    def validate_huber_delta(self, value):
        return _strictly_positive(value, "Le seuil de Huber")

    def validate_transitions_per_learn_step(self, value):
        return _strictly_positive(value, "Le ratio transitions/apprentissage")


class OrchestratorConfigSerializer(StrictSerializer):
    n_actors = _optional_int(min_value=1)
    backend = serializers.ChoiceField(choices=BACKENDS, required=False)
    start_method = serializers.ChoiceField(choices=('spawn', 'fork', 'forkserver'), required=False)
    experience_queue_size = _optional_int(min_value=1)
    eval_every = _optional_int(min_value=1, help_text="Épisodes d'acteurs entre deux évaluations")
    n_eval = _optional_int(min_value=1)
    checkpoint_every = _optional_int(min_value=1)
    graduation_strict = serializers.BooleanField(required=False)
    put_timeout_s = _optional_float()
    progress_every_s = _optional_float()
    max_duration_s = _optional_float(min_value=0.0, help_text="0 = sans limite")
    learner_jitter_s = _optional_float(min_value=0.0)

    def validate_put_timeout_s(self, value):
        return _strictly_positive(value, "Le délai d'envoi")

    def validate_progress_every_s(self, value):
        return _strictly_positive(value, "La période de progression")


class CurriculumStageConfigSerializer(StrictSerializer):
    index = serializers.IntegerField(min_value=0)
    name = serializers.CharField(max_length=100)
    map_kind = serializers.ChoiceField(choices=MAP_KINDS)
    width = serializers.IntegerField(min_value=4)
    height = serializers.IntegerField(min_value=4)
    n_agents = serializers.IntegerField(min_value=1)
    max_steps = serializers.IntegerField(min_value=1)
    threshold = _optional_float(min_value=0.0, max_value=1.0, help_text="Taux de réussite requis pour graduer")
    density = _optional_float(min_value=0.0, max_value=0.9)
    map_pool = _optional_int(min_value=1)


class BenchConfigSerializer(StrictSerializer):
    n_runs = _optional_int(min_value=1)
    agent_counts = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, min_length=1)
    max_steps = _optional_int(min_value=1)
    confidence = _optional_float()
    baseline_max_restarts = _optional_int(min_value=0)
    compare_episodes = _optional_int(min_value=1)

    def validate_confidence(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("Le niveau de confiance doit être dans ]0, 1[")
        return value


CONFIG_SECTION_SERIALIZERS = {
    'environment': EnvironmentConfigSerializer,
    'radio': RadioConfigSerializer,
    'observation': ObservationConfigSerializer,
    'reward': RewardConfigSerializer,
    'replay': ReplayConfigSerializer,
    'network': NetworkConfigSerializer,
    'learner': LearnerConfigSerializer,
    'orchestrator': OrchestratorConfigSerializer,
    'bench': BenchConfigSerializer,
}

# ============================================================================
# SERIALIZERS POUR ENTRAÎNEMENTS ET BANCS D'ESSAI
# ============================================================================

class EvaluationRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = EvaluationRecord
        fields = [
            'id', 'run', 'stage_index', 'learn_step', 'success_rate', 'mean_makespan',
            'mean_reward', 'mean_sinr_db', 'blackout_steps', 'n_episodes', 'graduated', 'created_at'
        ]
        read_only_fields = fields


class TrainingRunListSerializer(serializers.ModelSerializer):
    evaluations_count = serializers.SerializerMethodField()

    class Meta:
        model = TrainingRun
        fields = [
            'id', 'name', 'status', 'stage_index', 'stage_name', 'n_actors', 'backend',
            'learn_steps', 'env_steps', 'evaluations_count', 'created_at'
        ]
        read_only_fields = fields

    def get_evaluations_count(self, obj):
        return obj.evaluations.count()


class TrainingRunSerializer(serializers.ModelSerializer):
    started_by_name = serializers.CharField(source='started_by.username', read_only=True, default=None)
    last_evaluation = EvaluationRecordSerializer(read_only=True)

    class Meta:
        model = TrainingRun
        fields = [
            'id', 'name', 'config', 'seed', 'n_actors', 'backend', 'status', 'stage_index',
            'stage_name', 'learn_steps', 'env_steps', 'checkpoint_path', 'metrics_path',
            'summary', 'error_message', 'started_by', 'started_by_name', 'last_evaluation',
            'created_at', 'updated_at'
        ]
        read_only_fields = fields


class BenchmarkReportSerializer(serializers.ModelSerializer):
    class Meta:
        model = BenchmarkReport
        fields = [
            'id', 'kind', 'map_name', 'agent_counts', 'n_runs', 'checkpoint_path',
            'summary', 'csv_path', 'json_path', 'created_by', 'created_at'
        ]
        read_only_fields = fields


class ActivityLogSerializer(serializers.ModelSerializer):
    user_name = serializers.CharField(source='user.username', read_only=True, default=None)

    class Meta:
        model = ActivityLog
        fields = [
            'id', 'user', 'user_name', 'action', 'object_type',
            'object_id', 'details', 'ip_address', 'created_at'
        ]
        read_only_fields = ['id', 'created_at']

# ============================================================================
# SERIALIZERS POUR LES REQUÊTES DE SIMULATION
# ============================================================================

class MapSourceSerializer(serializers.Serializer):
    """Carte MovingAI fournie en texte, ou paramètres de génération"""
    map_text = serializers.CharField(
        required=False,
        allow_blank=False,
        trim_whitespace=False,
        help_text="Contenu d'un fichier .map MovingAI"
    )
    kind = serializers.ChoiceField(
        choices=[k for k in MAP_KINDS if k != 'warehouse'],
        required=False,
        help_text="Générateur de carte si map_text est absent"
    )
    width = serializers.IntegerField(min_value=4, max_value=256, default=32)
    height = serializers.IntegerField(min_value=4, max_value=256, default=32)
    density = serializers.FloatField(min_value=0.0, max_value=0.9, default=0.2)
    seed = serializers.IntegerField(min_value=0, default=0)
    cell_size_m = serializers.FloatField(min_value=0.01, default=1.0)

    def validate(self, data):
        if not data.get('map_text') and not data.get('kind'):
            raise serializers.ValidationError("Fournir map_text ou kind")
        return data


class MapTextSerializer(serializers.Serializer):
    map_text = serializers.CharField(trim_whitespace=False, help_text="Contenu d'un fichier .map MovingAI")


class RadioMapRequestSerializer(MapSourceSerializer):
    """Serializer pour le calcul d'une carte radio"""
    radio = serializers.DictField(
        required=False,
        default=dict,
        help_text="Section radio de la configuration (mêmes clés que le YAML)"
    )
    radio_seed = serializers.IntegerField(min_value=0, default=0)
    include_cells = serializers.BooleanField(
        default=False,
        help_text="Inclure le SINR de chaque cellule libre dans la réponse"
    )

    def validate_radio(self, value):
        section = RadioConfigSerializer(data=value)
        if not section.is_valid():
            raise serializers.ValidationError(section.errors)
        return section.validated_data


class PlanRequestSerializer(serializers.Serializer):
    """Serializer pour la planification par priorités"""
    map_text = serializers.CharField(trim_whitespace=False, help_text="Contenu d'un fichier .map MovingAI")
    scen_text = serializers.CharField(trim_whitespace=False, help_text="Contenu d'un fichier .scen MovingAI")
    n_agents = serializers.IntegerField(min_value=1, max_value=64)
    offset = serializers.IntegerField(min_value=0, default=0, help_text="Première ligne du scénario utilisée")
    max_restarts = serializers.IntegerField(min_value=0, max_value=100, default=10)
