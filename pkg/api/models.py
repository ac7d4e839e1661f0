# api/models.py
from django.db import models
from django.contrib.auth.models import User
from django.core.validators import MinValueValidator, MaxValueValidator
import uuid

class BaseModel(models.Model):
    """Modèle de base avec timestamp"""
    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True

# ============================================================================
# ENTRAÎNEMENT : RUN → ÉVALUATIONS
# ============================================================================

class TrainingRun(BaseModel):
    """Une session d'entraînement acteurs/apprenant"""
    name = models.CharField(max_length=200, blank=True, default='')
    config = models.JSONField(default=dict, help_text="Instantané complet de la RunConfig")
    seed = models.PositiveIntegerField(default=0)
    n_actors = models.PositiveIntegerField(default=4, validators=[MinValueValidator(1)])
    backend = models.CharField(
        max_length=10,
        choices=[
            ('process', 'Processus'),
            ('thread', 'Threads'),
        ],
        default='process'
    )
    status = models.CharField(
        max_length=10,
        choices=[
            ('PENDING', 'En attente'),
            ('RUNNING', 'En cours'),
            ('COMPLETED', 'Terminé'),
            ('STOPPED', 'Arrêté'),
            ('FAILED', 'Échec'),
        ],
        default='PENDING'
    )
    stage_index = models.PositiveIntegerField(default=0, help_text="Étape courante du curriculum")
    stage_name = models.CharField(max_length=100, blank=True, default='')
    learn_steps = models.PositiveBigIntegerField(default=0)
    env_steps = models.PositiveBigIntegerField(default=0)
    checkpoint_path = models.CharField(max_length=500, blank=True, default='')
    metrics_path = models.CharField(max_length=500, blank=True, default='')
    summary = models.JSONField(default=dict, blank=True)
    error_message = models.TextField(blank=True, default='')
    started_by = models.ForeignKey(User, on_delete=models.SET_NULL, null=True, blank=True)

    class Meta:
        db_table = 'training_run'
        verbose_name = 'Session d\'entraînement'
        verbose_name_plural = 'Sessions d\'entraînement'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.name or self.id} ({self.status}, étape {self.stage_index})"

    @property
    def last_evaluation(self):
        return self.evaluations.order_by('-learn_step', '-created_at').first()


class EvaluationRecord(BaseModel):
    """Évaluation gloutonne d'un instantané sur une étape du curriculum"""
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name='evaluations')
    stage_index = models.PositiveIntegerField()
    learn_step = models.PositiveBigIntegerField()
    success_rate = models.FloatField(validators=[MinValueValidator(0.0), MaxValueValidator(1.0)])
    mean_makespan = models.FloatField()
    mean_reward = models.FloatField()
    mean_sinr_db = models.FloatField(null=True, blank=True)
    blackout_steps = models.PositiveIntegerField(default=0)
    n_episodes = models.PositiveIntegerField()
    graduated = models.BooleanField(default=False)

    class Meta:
        db_table = 'evaluation_record'
        verbose_name = 'Évaluation'
        verbose_name_plural = 'Évaluations'
        ordering = ['run', 'learn_step']

    def __str__(self):
        return f"étape {self.stage_index} @ {self.learn_step} : {self.success_rate:.0%}"

# ============================================================================
# BANC D'ESSAI
# ============================================================================

class BenchmarkReport(BaseModel):
    """Rapport agrégé d'un banc d'essai ou d'une comparaison"""
    kind = models.CharField(
        max_length=10,
        choices=[
            ('bench', 'Banc d\'essai'),
            ('compare', 'Comparaison réseau'),
        ],
        default='bench'
    )
    map_name = models.CharField(max_length=200)
    agent_counts = models.JSONField(default=list)
    n_runs = models.PositiveIntegerField()
    checkpoint_path = models.CharField(max_length=500, blank=True, default='')
    summary = models.JSONField(default=dict, blank=True, help_text="Agrégats par variante et nombre d'agents")
    csv_path = models.CharField(max_length=500, blank=True, default='')
    json_path = models.CharField(max_length=500, blank=True, default='')
    created_by = models.ForeignKey(User, on_delete=models.SET_NULL, null=True, blank=True)

    class Meta:
        db_table = 'benchmark_report'
        verbose_name = 'Rapport de banc d\'essai'
        verbose_name_plural = 'Rapports de banc d\'essai'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.kind} {self.map_name} {self.agent_counts}"

# ============================================================================
# JOURNAL D'ACTIVITÉ
# ============================================================================

class ActivityLog(BaseModel):
    """Logs des activités système"""
    user = models.ForeignKey(User, on_delete=models.SET_NULL, null=True, blank=True)
    action = models.CharField(max_length=100)
    object_type = models.CharField(max_length=100)
    object_id = models.CharField(max_length=100)
    details = models.JSONField(default=dict, blank=True)
    ip_address = models.GenericIPAddressField(null=True, blank=True)

    class Meta:
        db_table = 'activity_log'
        verbose_name = 'Log d\'activité'
        verbose_name_plural = 'Logs d\'activité'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.action} {self.object_type}:{self.object_id}"
