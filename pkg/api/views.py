# api/views.py
from rest_framework import viewsets, status, filters
from rest_framework.decorators import action
from rest_framework.response import Response
from rest_framework.permissions import IsAuthenticated
from django_filters.rest_framework import DjangoFilterBackend
from django.conf import settings
import logging

from .models import TrainingRun, BenchmarkReport, ActivityLog
from .serializers import (
    TrainingRunSerializer, TrainingRunListSerializer, EvaluationRecordSerializer,
    BenchmarkReportSerializer, ActivityLogSerializer,
    RadioMapRequestSerializer, PlanRequestSerializer, MapTextSerializer,
)
from .services.exceptions import SimulationError
from .utils import log_activity, user_or_none

logger = logging.getLogger(__name__)


# ============================================================================
# SESSIONS D'ENTRAÎNEMENT ET RAPPORTS
# ============================================================================

class TrainingRunViewSet(viewsets.ReadOnlyModelViewSet):
    """Consultation des sessions d'entraînement (lancées par `manage.py train`)"""
    queryset = TrainingRun.objects.select_related('started_by').all().order_by('-created_at')
    permission_classes = [IsAuthenticated]
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['status', 'backend', 'stage_index']
    search_fields = ['name', 'stage_name']
    ordering_fields = ['created_at', 'learn_steps', 'stage_index']

    def get_serializer_class(self):
        if self.action == 'list':
            return TrainingRunListSerializer
        return TrainingRunSerializer

    @action(detail=True, methods=['get'])
    def evaluations(self, request, pk=None):
        """Évaluations d'une session, par pas d'apprentissage croissant"""
        run = self.get_object()
        records = run.evaluations.all().order_by('learn_step', 'created_at')
        stage_index = request.query_params.get('stage_index')
        if stage_index is not None:
            if not stage_index.isdigit():
                return Response({'error': 'stage_index doit être un entier positif'},
                                status=status.HTTP_400_BAD_REQUEST)
            records = records.filter(stage_index=int(stage_index))
        serializer = EvaluationRecordSerializer(records, many=True)
        return Response(serializer.data)


class BenchmarkReportViewSet(viewsets.ReadOnlyModelViewSet):
    """Consultation des rapports de banc d'essai"""
    queryset = BenchmarkReport.objects.all().order_by('-created_at')
    serializer_class = BenchmarkReportSerializer
    permission_classes = [IsAuthenticated]
    filter_backends = [DjangoFilterBackend, filters.SearchFilter, filters.OrderingFilter]
    filterset_fields = ['kind', 'map_name']
    search_fields = ['map_name']
    ordering_fields = ['created_at']


class ActivityLogViewSet(viewsets.ReadOnlyModelViewSet):
    """Consultation des logs d'activité"""
    queryset = ActivityLog.objects.select_related('user').all().order_by('-created_at')
    serializer_class = ActivityLogSerializer
    permission_classes = [IsAuthenticated]
    filter_backends = [DjangoFilterBackend, filters.OrderingFilter]
    filterset_fields = ['user', 'action', 'object_type']
    ordering_fields = ['created_at']

# ============================================================================
# SIMULATION À LA DEMANDE
# ============================================================================

class SimulationViewSet(viewsets.ViewSet):
    """Opérations de simulation courtes : carte radio, planification, validation de carte"""
    permission_classes = [IsAuthenticated]

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self._benchmark_service = None  # Instancié à la demande

    @property
    def benchmark_service(self):
        """Instancie le service seulement quand nécessaire"""
        if self._benchmark_service is None:
            from .services.benchmark_service import BenchmarkService
            self._benchmark_service = BenchmarkService()
        return self._benchmark_service

    def _map_too_large(self, width, height):
        limit = settings.MAPF_SETTINGS.get('MAX_API_MAP_CELLS', 256 * 256)
        if width * height > limit:
            return Response(
                {'error': f'Carte {width}x{height} trop grande pour l\'API ({limit} cellules au plus)'},
                status=status.HTTP_400_BAD_REQUEST
            )
        return None

    @action(detail=False, methods=['post'])
    def radio_map(self, request):
        """
        Calcule la carte SINR d'une carte fournie ou générée

        POST /api/v1/simulation/radio_map/
        {
            "map_text": "type octile\\nheight 4\\n...",  // ou "kind": "room"
            "radio": {"wall_loss_db": 7.0},  // optionnel
            "include_cells": false
        }
        """
        serializer = RadioMapRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        data = serializer.validated_data
        from .services.gridworld import generate_map
        from .services.movingai import parse_map
        from .services.radio import Deployment, build_radio_map
        from .services.run_config import build_section

        try:
            if data.get('map_text'):
                grid = parse_map(data['map_text'], name='api', cell_size_m=data['cell_size_m'])
            else:
                too_large = self._map_too_large(data['width'], data['height'])
                if too_large is not None:
                    return too_large
                grid = generate_map(
                    data['kind'], data['width'], data['height'], data['seed'],
                    density=data['density'], cell_size_m=data['cell_size_m'],
                )
            too_large = self._map_too_large(grid.width, grid.height)
            if too_large is not None:
                return too_large

            deployment = build_section(Deployment, data['radio'])
            radio = build_radio_map(grid, deployment, seed=data['radio_seed'])
            result = {
                'map': grid.name,
                'width': grid.width,
                'height': grid.height,
                'summary': radio.summary(),
            }
            if data['include_cells']:
                result['cells'] = radio.rows()

            log_activity(
                user_or_none(request),
                'RADIO_MAP',
                'Map',
                grid.name,
                {'width': grid.width, 'height': grid.height, 'radio_seed': data['radio_seed']},
                request
            )
            return Response(result, status=status.HTTP_200_OK)

        except SimulationError as e:
            return Response({'error': str(e)}, status=status.HTTP_400_BAD_REQUEST)
        except Exception as e:
            logger.error(f"Erreur lors du calcul de la carte radio : {str(e)}", exc_info=True)
            return Response(
                {'error': f'Erreur interne: {str(e)}'},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )

    @action(detail=False, methods=['post'])
    def plan(self, request):
        """
        Planification par priorités (référence du banc d'essai)

        POST /api/v1/simulation/plan/
        {
            "map_text": "...",
            "scen_text": "version 1\\n...",
            "n_agents": 4,
            "offset": 0  // optionnel
        }
        """
        serializer = PlanRequestSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        data = serializer.validated_data
        result = self.benchmark_service.plan(
            data['map_text'], data['scen_text'], data['n_agents'],
            offset=data['offset'], max_restarts=data['max_restarts'],
        )
        if result['status'] == 'invalid':
            return Response({'error': result['error']}, status=status.HTTP_400_BAD_REQUEST)
        if result['status'] == 'error':
            return Response(
                {'error': f"Erreur interne: {result['error']}"},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )

        log_activity(
            user_or_none(request),
            'PLAN',
            'Scenario',
            f"{data['n_agents']}@{data['offset']}",
            {'status': result['status'], 'makespan': result.get('makespan')},
            request
        )
        return Response(result, status=status.HTTP_200_OK)

    @action(detail=False, methods=['post'])
    def parse_map(self, request):
        """Valide un fichier .map MovingAI et renvoie ses dimensions"""
        serializer = MapTextSerializer(data=request.data)
        if not serializer.is_valid():
            return Response(serializer.errors, status=status.HTTP_400_BAD_REQUEST)

        from .services.exceptions import MapFormatError
        from .services.movingai import parse_map

        try:
            grid = parse_map(serializer.validated_data['map_text'])
        except MapFormatError as e:
            return Response({'error': str(e), 'line': e.line}, status=status.HTTP_400_BAD_REQUEST)

        return Response({
            'width': grid.width,
            'height': grid.height,
            'blocked_cells': grid.blocked_count,
            'passable_cells': int(grid.passable_mask.sum()),
            'largest_component': int(grid.largest_component.sum()),
        }, status=status.HTTP_200_OK)

    @action(detail=False, methods=['get'])
    def status(self, request):
        """Curriculum par défaut, versions des bibliothèques et compteurs"""
        import numpy
        import pandas
        import scipy
        from .services.orchestrator import default_curriculum
        from .services.training_service import TrainingService

        curriculum = [
            {
                'index': stage.index,
                'name': stage.name,
                'map_kind': stage.map_kind,
                'n_agents': stage.n_agents,
                'max_steps': stage.max_steps,
                'threshold': stage.threshold,
            }
            for stage in default_curriculum()
        ]
        return Response({
            'curriculum': curriculum,
            'libraries': {
                'numpy': numpy.__version__,
                'scipy': scipy.__version__,
                'pandas': pandas.__version__,
            },
            'training': TrainingService().get_training_status(),
            'benchmarks': self.benchmark_service.get_bench_status(),
        }, status=status.HTTP_200_OK)
