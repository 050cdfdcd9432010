# apps/motion/skeleton.py
"""
Esqueleto simplificado (Z arriba, metros, mano derecha) y cinemática directa.
"""

from dataclasses import dataclass, field

import numpy as np
from django.core.exceptions import ValidationError

DEFAULT_JOINT_NAMES = (
    'pelvis', 'spine', 'head',
    'left_hip', 'left_foot',
    'right_hip', 'right_foot',
    'right_hand',
)
DEFAULT_PARENTS = (-1, 0, 1, 0, 3, 0, 5, 1)
DEFAULT_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.0, 0.0, 0.25),
    (0.0, 0.0, 0.35),
    (0.0, 0.1, -0.05),
    (0.0, 0.0, -0.85),
    (0.0, -0.1, -0.05),
    (0.0, 0.0, -0.85),
    (0.0, -0.25, -0.15),
)
DEFAULT_FOOT_JOINTS = (4, 6)


@dataclass(frozen=True)
class Skeleton:
    parents: tuple
    offsets: np.ndarray
    foot_joints: tuple = DEFAULT_FOOT_JOINTS
    names: tuple = field(default=())

    def __post_init__(self):
        offsets = np.array(self.offsets, dtype=np.float64)
        object.__setattr__(self, 'offsets', offsets)
        object.__setattr__(self, 'parents', tuple(int(p) for p in self.parents))
        object.__setattr__(self, 'foot_joints', tuple(int(j) for j in self.foot_joints))
        if not self.names:
            object.__setattr__(self, 'names', tuple(f'joint_{i}' for i in range(len(self.parents))))
        offsets.setflags(write=False)
        self.validate()

    @property
    def joint_count(self):
        return len(self.parents)

    def validate(self):
        count = len(self.parents)
        if count < 1 or self.parents[0] != -1:
            raise ValidationError('Árbol mal formado: la articulación 0 debe ser la raíz.')
        for joint, parent in enumerate(self.parents[1:], start=1):
            if not 0 <= parent < joint:
                raise ValidationError(f'Árbol mal formado: la articulación {joint} tiene padre {parent}.')
        if self.offsets.shape != (count, 3):
            raise ValidationError(f'Se esperaban {count}×3 desplazamientos, hay {self.offsets.shape}.')
        if not np.isfinite(self.offsets).all():
            raise ValidationError('Los desplazamientos del esqueleto deben ser finitos.')
        if len(self.names) != count:
            raise ValidationError('Cantidad de nombres distinta a la de articulaciones.')

    def require_feet(self):
        if len(self.foot_joints) != 2 or any(not 0 < j < self.joint_count for j in self.foot_joints):
            raise ValidationError('El esqueleto no define dos articulaciones de pie válidas.')
        return self.foot_joints

    def rest_positions(self):
        """Posiciones acumuladas en reposo, con la raíz en el origen."""
        positions = np.zeros((self.joint_count, 3))
        for joint in range(1, self.joint_count):
            positions[joint] = positions[self.parents[joint]] + self.offsets[joint]
        return positions

    def standing_height(self):
        """Altura de la raíz cuando el punto más bajo en reposo toca z=0."""
        return float(-self.rest_positions()[:, 2].min())

    def joint_index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"El esqueleto no tiene la articulación '{name}'.")

    def as_dict(self):
        return {
            'parents': list(self.parents),
            'offsets': self.offsets.tolist(),
            'foot_joints': list(self.foot_joints),
            'names': list(self.names),
        }


def default_skeleton():
    """Cadena de 8 articulaciones: pelvis, columna, cabeza, dos piernas de 2 y una mano."""
    return Skeleton(DEFAULT_PARENTS, DEFAULT_OFFSETS, DEFAULT_FOOT_JOINTS, DEFAULT_JOINT_NAMES)


def skeleton_from_config(data):
    if not data:
        return default_skeleton()
    return Skeleton(
        parents=data['parents'],
        offsets=data['offsets'],
        foot_joints=data.get('foot_joints', DEFAULT_FOOT_JOINTS),
        names=tuple(data.get('names') or ()),
    )


def axis_angle_to_matrix(axis_angle):
    """Rodrigues vectorizado: (..., 3) -> (..., 3, 3)."""
    axis_angle = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(axis_angle, axis=-1, keepdims=True)
    safe = np.where(angle > 1e-12, angle, 1.0)
    axis = axis_angle / safe
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zeros = np.zeros_like(x)
    skew = np.stack([
        np.stack([zeros, -z, y], axis=-1),
        np.stack([z, zeros, -x], axis=-1),
        np.stack([-y, x, zeros], axis=-1),
    ], axis=-2)
    theta = angle[..., None]
    eye = np.broadcast_to(np.eye(3), skew.shape)
    rot = eye + np.sin(theta) * skew + (1.0 - np.cos(theta)) * (skew @ skew)
    small = (angle[..., 0] <= 1e-12)
    if np.any(small):
        rot = np.where(small[..., None, None], eye, rot)
    return rot


def matrix_to_axis_angle(rot):
    rot = np.asarray(rot, dtype=np.float64)
    cos = np.clip((np.trace(rot, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    vec = np.stack([
        rot[..., 2, 1] - rot[..., 1, 2],
        rot[..., 0, 2] - rot[..., 2, 0],
        rot[..., 1, 0] - rot[..., 0, 1],
    ], axis=-1)
    sin = np.sin(angle)
    scale = np.where(np.abs(sin) > 1e-9, angle / (2.0 * np.where(np.abs(sin) > 1e-9, sin, 1.0)), 0.5)
    return vec * scale[..., None]


def yaw_from_rotation(axis_angle):
    """Rumbo (rad) del eje +X local de la raíz proyectado al plano horizontal."""
    rot = axis_angle_to_matrix(axis_angle)
    return np.arctan2(rot[..., 1, 0], rot[..., 0, 0])


def forward_kinematics(skeleton: Skeleton, translation, rotations):
    """
    Posiciones mundiales (J×3) para un fotograma. `rotations` tiene J ejes-ángulo
    relativos al padre; la entrada de la raíz es la orientación global.
    """
    translation = np.asarray(translation, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    if rotations.shape != (skeleton.joint_count, 3):
        raise ValidationError(f'Se esperaban {skeleton.joint_count} rotaciones, forma {rotations.shape}.')
    local = axis_angle_to_matrix(rotations)
    world_rot = np.zeros((skeleton.joint_count, 3, 3))
    positions = np.zeros((skeleton.joint_count, 3))
    world_rot[0] = local[0]
    positions[0] = translation
    for joint in range(1, skeleton.joint_count):
        parent = skeleton.parents[joint]
        positions[joint] = positions[parent] + world_rot[parent] @ skeleton.offsets[joint]
        world_rot[joint] = world_rot[parent] @ local[joint]
    return positions


def forward_kinematics_sequence(skeleton: Skeleton, translations, rotations):
    """FK por lotes: (N×3, N×J×3) -> N×J×3."""
    translations = np.asarray(translations, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    frames = translations.shape[0]
    local = axis_angle_to_matrix(rotations)
    world_rot = np.zeros((frames, skeleton.joint_count, 3, 3))
    positions = np.zeros((frames, skeleton.joint_count, 3))
    world_rot[:, 0] = local[:, 0]
    positions[:, 0] = translations
    for joint in range(1, skeleton.joint_count):
        parent = skeleton.parents[joint]
        positions[:, joint] = positions[:, parent] + world_rot[:, parent] @ skeleton.offsets[joint]
        world_rot[:, joint] = world_rot[:, parent] @ local[:, joint]
    return positions
