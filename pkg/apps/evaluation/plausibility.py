# apps/evaluation/plausibility.py
"""
Plausibilidad física: no-colisión (fracción de consultas articulación/fotograma
que no penetran la superficie) y contacto (fracción de secuencias que tocan la
escena en algún momento).
"""

import numpy as np
from django.core.exceptions import ValidationError

from apps.motion.representation import markers
from apps.scenes.cloud import ScenePointCloud

DEFAULT_COLLISION_THRESHOLD = 0.05
DEFAULT_CONTACT_THRESHOLD = 0.05


def _frame_clouds(scene: ScenePointCloud, frames):
    if len(scene) == 0:
        raise ValidationError('La escena está vacía.')
    if not scene.is_dynamic:
        return [scene] * frames
    return [scene.frame_cloud(i) for i in range(frames)]


def signed_distances(positions, scene: ScenePointCloud):
    """Distancias (sin signo, con signo) de cada marcador N×J×3 a la nube de su fotograma."""
    positions = np.asarray(positions, dtype=np.float64)
    frames, joints, _ = positions.shape
    unsigned = np.empty((frames, joints))
    signed = np.empty((frames, joints))
    for i, cloud in enumerate(_frame_clouds(scene, frames)):
        _, unsigned[i], signed[i] = cloud.nearest_many(positions[i])
    return unsigned, signed


def non_collision_score(motion, skeleton, scene: ScenePointCloud, threshold=DEFAULT_COLLISION_THRESHOLD):
    """Fracción de consultas con distancia con signo ≥ −τ_col."""
    _, signed = signed_distances(markers(motion, skeleton), scene)
    return float(np.mean(signed >= -threshold))


def in_contact(motion, skeleton, scene: ScenePointCloud, threshold=DEFAULT_CONTACT_THRESHOLD):
    unsigned, _ = signed_distances(markers(motion, skeleton), scene)
    return bool((unsigned <= threshold).any())


def contact_score(motions, skeleton, scenes, threshold=DEFAULT_CONTACT_THRESHOLD):
    """
    Fracción de secuencias con al menos una consulta a distancia ≤ τ_con.
    `scenes` es una nube común o una lista con una nube por movimiento.
    """
    motions = list(motions)
    if not motions:
        raise ValidationError('contact_score necesita al menos un movimiento.')
    if isinstance(scenes, ScenePointCloud):
        scenes = [scenes] * len(motions)
    if len(scenes) != len(motions):
        raise ValidationError('Se necesita una escena por movimiento.')
    hits = [in_contact(m, skeleton, s, threshold) for m, s in zip(motions, scenes)]
    return float(np.mean(hits))
