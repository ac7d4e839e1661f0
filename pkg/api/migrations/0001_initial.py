# Generated by Django 5.2.5 on 2026-10-17 09:12

import django.core.validators
import django.db.models.deletion
import uuid
from django.conf import settings
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
        migrations.swappable_dependency(settings.AUTH_USER_MODEL),
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('name', models.CharField(blank=True, default='', max_length=200)),
                ('config', models.JSONField(default=dict, help_text='Instantané complet de la RunConfig')),
                ('seed', models.PositiveIntegerField(default=0)),
                ('n_actors', models.PositiveIntegerField(default=4, validators=[django.core.validators.MinValueValidator(1)])),
                ('backend', models.CharField(choices=[('process', 'Processus'), ('thread', 'Threads')], default='process', max_length=10)),
                ('status', models.CharField(choices=[('PENDING', 'En attente'), ('RUNNING', 'En cours'), ('COMPLETED', 'Terminé'), ('STOPPED', 'Arrêté'), ('FAILED', 'Échec')], default='PENDING', max_length=10)),
                ('stage_index', models.PositiveIntegerField(default=0, help_text='Étape courante du curriculum')),
                ('stage_name', models.CharField(blank=True, default='', max_length=100)),
                ('learn_steps', models.PositiveBigIntegerField(default=0)),
                ('env_steps', models.PositiveBigIntegerField(default=0)),
                ('checkpoint_path', models.CharField(blank=True, default='', max_length=500)),
                ('metrics_path', models.CharField(blank=True, default='', max_length=500)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('error_message', models.TextField(blank=True, default='')),
                ('started_by', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, to=settings.AUTH_USER_MODEL)),
            ],
            options={
                'verbose_name': "Session d'entraînement",
                'verbose_name_plural': "Sessions d'entraînement",
                'db_table': 'training_run',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EvaluationRecord',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('stage_index', models.PositiveIntegerField()),
                ('learn_step', models.PositiveBigIntegerField()),
                ('success_rate', models.FloatField(validators=[django.core.validators.MinValueValidator(0.0), django.core.validators.MaxValueValidator(1.0)])),
                ('mean_makespan', models.FloatField()),
                ('mean_reward', models.FloatField()),
                ('mean_sinr_db', models.FloatField(blank=True, null=True)),
                ('blackout_steps', models.PositiveIntegerField(default=0)),
                ('n_episodes', models.PositiveIntegerField()),
                ('graduated', models.BooleanField(default=False)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='evaluations', to='api.trainingrun')),
            ],
            options={
                'verbose_name': 'Évaluation',
                'verbose_name_plural': 'Évaluations',
                'db_table': 'evaluation_record',
                'ordering': ['run', 'learn_step'],
            },
        ),
        migrations.CreateModel(
            name='BenchmarkReport',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('kind', models.CharField(choices=[('bench', "Banc d'essai"), ('compare', 'Comparaison réseau')], default='bench', max_length=10)),
                ('map_name', models.CharField(max_length=200)),
                ('agent_counts', models.JSONField(default=list)),
                ('n_runs', models.PositiveIntegerField()),
                ('checkpoint_path', models.CharField(blank=True, default='', max_length=500)),
                ('summary', models.JSONField(blank=True, default=dict, help_text="Agrégats par variante et nombre d'agents")),
                ('csv_path', models.CharField(blank=True, default='', max_length=500)),
                ('json_path', models.CharField(blank=True, default='', max_length=500)),
                ('created_by', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, to=settings.AUTH_USER_MODEL)),
            ],
            options={
                'verbose_name': "Rapport de banc d'essai",
                'verbose_name_plural': "Rapports de banc d'essai",
                'db_table': 'benchmark_report',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ActivityLog',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('action', models.CharField(max_length=100)),
                ('object_type', models.CharField(max_length=100)),
                ('object_id', models.CharField(max_length=100)),
                ('details', models.JSONField(blank=True, default=dict)),
                ('ip_address', models.GenericIPAddressField(blank=True, null=True)),
                ('user', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, to=settings.AUTH_USER_MODEL)),
            ],
            options={
                'verbose_name': "Log d'activité",
                'verbose_name_plural': "Logs d'activité",
                'db_table': 'activity_log',
                'ordering': ['-created_at'],
            },
        ),
    ]
