# apps/evaluation/diversity.py
"""
Diversidad entre las K muestras de una misma condición (APD y std) en tres
espacios: traslación de la raíz (t), rasgos de pose sin traslación (p) y
marcadores (m).
"""

import numpy as np
from django.core.exceptions import ValidationError

from apps.motion.representation import markers

DIVERSITY_MODES = ('t', 'p', 'm')
POSE_COLUMNS = slice(4, None)


def sample_array(motion, mode, skeleton=None):
    """Vectores por fotograma usados por cada modo: N×3, N×(d−4) o N×J×3."""
    if mode == 't':
        return np.asarray(motion.root_translation, dtype=np.float64)
    if mode == 'p':
        if motion.features is None:
            raise ValidationError('APD-p requiere la matriz de rasgos del movimiento.')
        return np.asarray(motion.features, dtype=np.float64)[:, POSE_COLUMNS]
    if mode == 'm':
        if skeleton is None:
            raise ValidationError('APD-m requiere el esqueleto.')
        return markers(motion, skeleton)
    raise ValidationError(f"Modo de diversidad desconocido '{mode}'. Opciones: {list(DIVERSITY_MODES)}")


def sample_distance(a, b):
    """Distancia euclídea media por fotograma (y por marcador en modo m)."""
    return float(np.linalg.norm(a - b, axis=-1).mean())


def condition_diversity(arrays):
    """(APD, std) para las K muestras de una condición."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    count = len(arrays)
    if count < 2:
        raise ValidationError('APD requiere al menos K = 2 muestras por condición.')
    if len({a.shape for a in arrays}) != 1:
        raise ValidationError('Las muestras de una condición deben tener la misma forma.')
    pairs = [sample_distance(arrays[i], arrays[j]) for i in range(count) for j in range(i + 1, count)]
    apd = 2.0 / (count * (count - 1)) * float(np.sum(pairs))
    center = np.mean(arrays, axis=0)
    # std: desviación cuadrática media de cada muestra respecto de la media de la condición
    deviations = np.array([sample_distance(a, center) for a in arrays])
    std = float(np.sqrt(np.mean(deviations ** 2)))
    return apd, std


def apd_std(samples_per_condition, mode, skeleton=None):
    """Promedio sobre condiciones de (APD, std). Cada condición es una lista de K movimientos."""
    if not samples_per_condition:
        raise ValidationError('No hay condiciones para medir la diversidad.')
    values = [
        condition_diversity([sample_array(m, mode, skeleton) for m in motions])
        for motions in samples_per_condition
    ]
    apd = float(np.mean([v[0] for v in values]))
    std = float(np.mean([v[1] for v in values]))
    return apd, std
