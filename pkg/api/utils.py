# ================================================================
# api/utils.py - Utilitaires et fonctions helper
# ================================================================

import math

from django.contrib.auth.models import User
from .models import ActivityLog

def get_client_ip(request):
    """Récupère l'adresse IP du client"""
    x_forwarded_for = request.META.get('HTTP_X_FORWARDED_FOR')
    if x_forwarded_for:
        ip = x_forwarded_for.split(',')[0]
    else:
        ip = request.META.get('REMOTE_ADDR')
    return ip

def log_activity(user, action, object_type, object_id, details=None, request=None):
    """Enregistre une activité dans les logs"""
    if details is None:
        details = {}

    ip = None
    if request:
        ip = get_client_ip(request)

    ActivityLog.objects.create(
        user=user if isinstance(user, User) else None,
        action=action,
        object_type=object_type,
        object_id=str(object_id),
        details=json_safe(details),
        ip_address=ip
    )

def json_safe(value):
    """Convertit récursivement en types JSON (NaN/inf → None, tuples → listes, numpy → natif)"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if hasattr(value, 'item') and callable(value.item):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value

def user_or_none(request):
    """Utilisateur authentifié de la requête, sinon None"""
    user = getattr(request, 'user', None)
    return user if user is not None and user.is_authenticated else None
