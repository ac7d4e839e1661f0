# api/admin.py
from django.contrib import admin
from django.utils.html import format_html
from .models import TrainingRun, EvaluationRecord, BenchmarkReport, ActivityLog


# ============================================================================
# ADMIN POUR LES SESSIONS D'ENTRAÎNEMENT
# ============================================================================

class EvaluationRecordInline(admin.TabularInline):
    model = EvaluationRecord
    extra = 0
    fields = ['stage_index', 'learn_step', 'success_rate', 'mean_makespan', 'mean_sinr_db', 'graduated']
    readonly_fields = fields
    ordering = ['learn_step']

    def has_add_permission(self, request, obj=None):
        return False

@admin.register(TrainingRun)
class TrainingRunAdmin(admin.ModelAdmin):
    list_display = ['name', 'status_display', 'stage_name', 'n_actors', 'backend', 'learn_steps', 'env_steps', 'created_at']
    list_filter = ['status', 'backend', 'stage_index']
    search_fields = ['name', 'stage_name', 'error_message']
    readonly_fields = ['created_at', 'updated_at', 'learn_steps', 'env_steps', 'summary']
    inlines = [EvaluationRecordInline]
    ordering = ['-created_at']

    fieldsets = (
        ('Session', {
            'fields': ('name', 'status', 'seed', 'n_actors', 'backend', 'started_by')
        }),
        ('Progression', {
            'fields': ('stage_index', 'stage_name', 'learn_steps', 'env_steps')
        }),
        ('Sorties', {
            'fields': ('checkpoint_path', 'metrics_path', 'summary', 'error_message')
        }),
        ('Configuration', {
            'fields': ('config',),
            'classes': ('collapse',)
        }),
        ('Métadonnées', {
            'fields': ('created_at', 'updated_at'),
            'classes': ('collapse',)
        }),
    )

    def status_display(self, obj):
        colors = {
            'PENDING': 'gray',
            'RUNNING': 'blue',
            'COMPLETED': 'green',
            'STOPPED': 'orange',
            'FAILED': 'red',
        }
        return format_html(
            '<span style="color: {}; font-weight: bold;">{}</span>',
            colors.get(obj.status, 'black'),
            obj.get_status_display()
        )
    status_display.short_description = 'Statut'

@admin.register(EvaluationRecord)
class EvaluationRecordAdmin(admin.ModelAdmin):
    list_display = ['run', 'stage_index', 'learn_step', 'success_rate', 'mean_makespan', 'graduated', 'created_at']
    list_filter = ['stage_index', 'graduated']
    ordering = ['run', 'learn_step']

# ============================================================================
# ADMIN POUR LES RAPPORTS ET LOGS
# ============================================================================

@admin.register(BenchmarkReport)
class BenchmarkReportAdmin(admin.ModelAdmin):
    list_display = ['kind', 'map_name', 'agent_counts', 'n_runs', 'created_at']
    list_filter = ['kind']
    search_fields = ['map_name', 'checkpoint_path']
    readonly_fields = ['created_at', 'updated_at', 'summary']
    ordering = ['-created_at']

@admin.register(ActivityLog)
class ActivityLogAdmin(admin.ModelAdmin):
    list_display = ['user', 'action', 'object_type', 'object_id', 'created_at']
    list_filter = ['action', 'object_type', 'user']
    readonly_fields = ['created_at', 'updated_at']
    date_hierarchy = 'created_at'
    ordering = ['-created_at']

    def has_add_permission(self, request):
        return False  # Les logs ne doivent pas être créés manuellement

    def has_change_permission(self, request, obj=None):
        return False  # Les logs ne doivent pas être modifiés
