# api/services/metrics.py
"""Journal CSV des métriques (épisodes, courbes d'apprentissage, rapports de banc d'essai)."""
import logging
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)


def _existing_columns(path: Path) -> Optional[List[str]]:
    if not path.exists() or path.stat().st_size == 0:
        return None
    return list(pd.read_csv(path, nrows=0).columns)


def write_metrics(records: Iterable[Mapping], path, columns: Optional[Sequence[str]] = None) -> int:
    """
    Ajoute des enregistrements à un CSV à en-tête. Le fichier est créé avec
    l'en-tête au premier appel ; les appels suivants respectent l'ordre des
    colonnes existant. Renvoie le nombre de lignes écrites.
    """
    records = list(records)
    if not records:
        return 0
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    frame = pd.DataFrame.from_records(records)
    existing = _existing_columns(path)
    if existing is not None:
        unknown = [c for c in frame.columns if c not in existing]
        if unknown:
            logger.warning(f"Colonnes ignorées dans {path.name} (absentes de l'en-tête) : {unknown}")
        frame = frame.reindex(columns=existing)
    elif columns is not None:
        frame = frame.reindex(columns=list(columns))

    frame.to_csv(path, mode='a', header=existing is None, index=False)
    return len(frame)


def read_metrics(path) -> List[dict]:
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    frame = pd.read_csv(path, float_precision='round_trip')
    frame = frame.astype(object).where(pd.notna(frame), None)
    return frame.to_dict(orient='records')


def read_metrics_frame(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')
