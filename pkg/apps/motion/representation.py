# apps/motion/representation.py
"""
Secuencias de movimiento y el formato de rasgos por fotograma "hml-lite-v1".

Disposición por fotograma (J articulaciones):
  [0]                    velocidad angular de rumbo de la raíz (rad/fotograma)
  [1:3]                  velocidad lineal planar de la raíz, en el marco de rumbo
  [3]                    altura de la raíz
  [4 : 4+3(J-1)]         posiciones locales de las articulaciones 1..J-1 respecto a la raíz
  [.. : ..+3J]           velocidades lineales de todas las articulaciones
  [-2:]                  contacto de los dos pies (0/1)
Las magnitudes locales están rotadas por -rumbo del fotograma. El último
fotograma repite las velocidades del penúltimo.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd.tensor import Tensor, concat, stack

from .skeleton import Skeleton, forward_kinematics_sequence, yaw_from_rotation

LAYOUT_NAME = 'hml-lite-v1'
DEFAULT_FPS = 10.0
SHAPE_DIM = 10


class PoseFeatureLayout:
    name = LAYOUT_NAME

    def __init__(self, num_joints):
        if num_joints < 2:
            raise ValidationError('La disposición requiere al menos 2 articulaciones.')
        self.num_joints = num_joints
        self.yaw_velocity = slice(0, 1)
        self.planar_velocity = slice(1, 3)
        self.root_height = slice(3, 4)
        self.local_positions = slice(4, 4 + 3 * (num_joints - 1))
        self.joint_velocities = slice(self.local_positions.stop, self.local_positions.stop + 3 * num_joints)
        self.contacts = slice(self.joint_velocities.stop, self.joint_velocities.stop + 2)
        self.width = self.contacts.stop
        # Bloque de pose sin traslación (para APD-p)
        self.pose_block = slice(self.local_positions.start, self.width)

    def check(self, features):
        features = np.asarray(features)
        if features.ndim != 2 or features.shape[1] != self.width:
            raise ValidationError(
                f'{self.name}: se esperaban {self.width} rasgos por fotograma, forma {features.shape}.')
        return features


def wrap_angle(angle):
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def _rotate_z(vectors, yaw):
    """Rota vectores (..., 3) o (..., 2) alrededor de Z por `yaw` (difundible)."""
    c, s = np.cos(yaw), np.sin(yaw)
    x, y = vectors[..., 0], vectors[..., 1]
    out = np.array(vectors, dtype=np.float64, copy=True)
    out[..., 0] = c * x - s * y
    out[..., 1] = s * x + c * y
    return out


@dataclass(frozen=True)
class MotionSequence:
    fps: float
    root_translation: np.ndarray          # N×3
    root_yaw: np.ndarray                  # N
    joint_positions: np.ndarray           # N×J×3 (mundo)
    rotations: Optional[np.ndarray] = None  # N×J×3 eje-ángulo, None si viene de rasgos
    features: Optional[np.ndarray] = None   # N×d_pose si se conoce
    shape: Optional[np.ndarray] = None      # β canónico (ceros)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValidationError('fps debe ser positivo.')
        for attr in ('root_translation', 'root_yaw', 'joint_positions', 'rotations', 'features'):
            value = getattr(self, attr)
            if value is None:
                continue
            array = np.array(value, dtype=np.float64)
            if not np.isfinite(array).all():
                raise ValidationError(f'MotionSequence.{attr} contiene valores no finitos.')
            array.setflags(write=False)
            object.__setattr__(self, attr, array)
        if self.shape is None:
            beta = np.zeros(SHAPE_DIM)
            beta.setflags(write=False)
            object.__setattr__(self, 'shape', beta)
        if self.num_frames < 1:
            raise ValidationError('Una secuencia necesita al menos un fotograma.')

    @property
    def num_frames(self):
        return int(self.root_translation.shape[0])

    @property
    def num_joints(self):
        return int(self.joint_positions.shape[1])

    @classmethod
    def from_pose(cls, skeleton: Skeleton, translations, rotations, fps=DEFAULT_FPS):
        translations = np.asarray(translations, dtype=np.float64)
        rotations = np.asarray(rotations, dtype=np.float64)
        if rotations.shape != (translations.shape[0], skeleton.joint_count, 3):
            raise ValidationError(f'Rotaciones con forma {rotations.shape} incompatibles con el esqueleto.')
        positions = forward_kinematics_sequence(skeleton, translations, rotations)
        return cls(
            fps=fps,
            root_translation=translations,
            root_yaw=yaw_from_rotation(rotations[:, 0]),
            joint_positions=positions,
            rotations=rotations,
        )

    @classmethod
    def from_features(cls, features, root_position, root_yaw, fps=DEFAULT_FPS, num_joints=None):
        features = np.asarray(features, dtype=np.float64)
        if num_joints is None:
            # d = 4 + 3(J-1) + 3J + 2 = 6J + 3
            num_joints = (features.shape[1] - 3) // 6
        layout = PoseFeatureLayout(num_joints)
        translation, yaw, positions = decode_features(features, root_position, root_yaw, layout)
        return cls(fps=fps, root_translation=translation, root_yaw=yaw,
                   joint_positions=positions, features=features)

    def root_init(self):
        return {
            'pos': [float(v) for v in self.root_translation[0]],
            'yaw': float(self.root_yaw[0]),
        }


def _frame_differences(values):
    """Diferencias hacia adelante; la última fila repite la penúltima."""
    diffs = values[1:] - values[:-1]
    return np.concatenate([diffs, diffs[-1:]], axis=0)


def foot_contact_flags(motion: MotionSequence, skeleton: Skeleton,
                       velocity_threshold=0.05, height_threshold=0.08):
    """N×2 binario: velocidad del pie ≤ umbral Y altura del pie ≤ umbral."""
    if velocity_threshold <= 0 or height_threshold <= 0:
        raise ValidationError('Los umbrales de contacto deben ser positivos.')
    feet = list(skeleton.require_feet())
    foot_positions = motion.joint_positions[:, feet]
    if motion.num_frames < 2:
        speeds = np.zeros((motion.num_frames, 2))
    else:
        speeds = np.linalg.norm(_frame_differences(foot_positions), axis=-1)
    heights = foot_positions[..., 2]
    return ((speeds <= velocity_threshold) & (heights <= height_threshold)).astype(np.float64)


def encode_features(motion: MotionSequence, skeleton: Skeleton,
                    velocity_threshold=0.05, height_threshold=0.08):
    if motion.num_frames < 2:
        raise ValidationError('encode_features requiere al menos 2 fotogramas.')
    if motion.num_joints != skeleton.joint_count:
        raise ValidationError('El movimiento y el esqueleto no tienen el mismo número de articulaciones.')
    layout = PoseFeatureLayout(skeleton.joint_count)
    frames = motion.num_frames
    yaw = motion.root_yaw
    root = motion.root_translation
    joints = motion.joint_positions

    features = np.zeros((frames, layout.width))
    features[:, layout.yaw_velocity] = wrap_angle(_frame_differences(yaw))[:, None]
    planar = _frame_differences(root)[:, :2]
    features[:, layout.planar_velocity] = _rotate_z(planar, -yaw)
    features[:, layout.root_height] = root[:, 2:3]
    local = joints[:, 1:] - root[:, None, :]
    features[:, layout.local_positions] = _rotate_z(local, -yaw[:, None]).reshape(frames, -1)
    velocities = _frame_differences(joints)
    features[:, layout.joint_velocities] = _rotate_z(velocities, -yaw[:, None]).reshape(frames, -1)
    features[:, layout.contacts] = foot_contact_flags(motion, skeleton, velocity_threshold, height_threshold)
    return features


def decode_features(features, root_position, root_yaw, layout: PoseFeatureLayout):
    """
    Integra velocidades desde el estado inicial de la raíz.
    Devuelve (traslación N×3, rumbo N, posiciones N×J×3).
    """
    features = layout.check(features).astype(np.float64)
    frames = features.shape[0]
    dyaw = features[:, 0]
    yaw = float(root_yaw) + np.concatenate([[0.0], np.cumsum(dyaw[:-1])])
    planar_world = _rotate_z(features[:, layout.planar_velocity], yaw)
    xy = np.asarray(root_position, dtype=np.float64)[:2] + np.concatenate(
        [np.zeros((1, 2)), np.cumsum(planar_world[:-1], axis=0)], axis=0)
    translation = np.column_stack([xy, features[:, 3]])
    local = features[:, layout.local_positions].reshape(frames, layout.num_joints - 1, 3)
    positions = np.concatenate([
        translation[:, None, :],
        translation[:, None, :] + _rotate_z(local, yaw[:, None]),
    ], axis=1)
    return translation, yaw, positions


def markers(motion: MotionSequence, skeleton: Skeleton):
    """Marcadores = posiciones mundiales de las articulaciones, N×J×3."""
    if motion.rotations is not None:
        return forward_kinematics_sequence(skeleton, motion.root_translation, motion.rotations)
    if motion.num_joints != skeleton.joint_count:
        raise ValidationError('El movimiento y el esqueleto no tienen el mismo número de articulaciones.')
    return np.array(motion.joint_positions)


def decode_positions_tensor(features: Tensor, layout: PoseFeatureLayout):
    """
    Versión diferenciable de `decode_features` para lotes (B×N×d) con la raíz
    inicial en el origen y rumbo 0. Devuelve posiciones B×N×J×3.
    """
    batch, frames, _ = features.shape
    dyaw = features[:, :, 0]
    yaw = dyaw.cumsum(axis=1) - dyaw
    c, s = yaw.cos(), yaw.sin()
    vx, vy = features[:, :, 1], features[:, :, 2]
    wx = c * vx - s * vy
    wy = s * vx + c * vy
    x = wx.cumsum(axis=1) - wx
    y = wy.cumsum(axis=1) - wy
    root = stack([x, y, features[:, :, 3]], axis=-1)

    local = features[:, :, layout.local_positions].reshape(batch, frames, layout.num_joints - 1, 3)
    lx, ly, lz = local[:, :, :, 0], local[:, :, :, 1], local[:, :, :, 2]
    c4 = c.reshape(batch, frames, 1)
    s4 = s.reshape(batch, frames, 1)
    rotated = stack([c4 * lx - s4 * ly, s4 * lx + c4 * ly, lz], axis=-1)
    root4 = root.reshape(batch, frames, 1, 3)
    return concat([root4, rotated + root4], axis=2)
