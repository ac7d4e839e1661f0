# api/urls.py
from django.urls import path, include
from rest_framework.routers import DefaultRouter
from rest_framework.authtoken.views import obtain_auth_token

from .views import (
    TrainingRunViewSet, BenchmarkReportViewSet, ActivityLogViewSet, SimulationViewSet
)

# Configuration du router pour les ViewSets
router = DefaultRouter()

router.register(r'training-runs', TrainingRunViewSet, basename='training-run')
router.register(r'benchmark-reports', BenchmarkReportViewSet, basename='benchmark-report')
router.register(r'simulation', SimulationViewSet, basename='simulation')

# Système et administration
router.register(r'logs', ActivityLogViewSet, basename='activity-log')


urlpatterns = [
    # Routes de l'API
    path('', include(router.urls)),

    # Authentification par token
    path('auth/token/', obtain_auth_token, name='api_token_auth'),

    # Routes d'authentification DRF
    path('auth/', include('rest_framework.urls', namespace='rest_framework')),
]
