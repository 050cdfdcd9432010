# apps/motion/scripts.py
"""
Guiones de movimiento procedurales sobre el esqueleto por defecto.

Todos los guiones empiezan en el origen, mirando hacia +X (rumbo 0). Las
alturas del suelo llegan como una función `ground(x, y) -> z` para que los
movimientos sean consistentes con la escena que los genera.
"""

from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

from .representation import DEFAULT_FPS, MotionSequence
from .skeleton import Skeleton

MOTION_SCRIPTS = ('walk_to', 'sit_on', 'climb_stairs', 'circle', 'wave')

GAIT_AMPLITUDE = 0.25
STRIDE_LENGTH = 1.0
# Ventana de anticipación (m) para la altura de apoyo sobre terreno escalonado
SUPPORT_WINDOW = (-0.15, 0.3)


def flat_ground(x, y):
    return 0.0


@dataclass(frozen=True)
class PoseFrame:
    position: tuple
    yaw: float
    left_leg: float = 0.0
    right_leg: float = 0.0
    spine_roll: float = 0.0


class BodyRig:
    """Índices y medidas del esqueleto que usan los guiones."""

    def __init__(self, skeleton: Skeleton):
        self.skeleton = skeleton
        self.spine = skeleton.joint_index('spine')
        self.left_hip = skeleton.joint_index('left_hip')
        self.right_hip = skeleton.joint_index('right_hip')
        left_foot = skeleton.joint_index('left_foot')
        self.hip_drop = float(-skeleton.offsets[self.left_hip][2])
        self.leg_length = float(-skeleton.offsets[left_foot][2])
        self.standing_height = skeleton.standing_height()

    def rotations(self, frame: PoseFrame):
        rot = np.zeros((self.skeleton.joint_count, 3))
        rot[0] = (0.0, 0.0, frame.yaw)
        rot[self.left_hip] = (0.0, frame.left_leg, 0.0)
        rot[self.right_hip] = (0.0, frame.right_leg, 0.0)
        rot[self.spine] = (frame.spine_roll, 0.0, 0.0)
        return rot


def assemble(skeleton: Skeleton, frames, fps=DEFAULT_FPS):
    if not frames:
        raise ValidationError('Un guion debe producir al menos un fotograma.')
    rig = BodyRig(skeleton)
    translations = np.array([f.position for f in frames], dtype=np.float64)
    rotations = np.stack([rig.rotations(f) for f in frames])
    return MotionSequence.from_pose(skeleton, translations, rotations, fps=fps)


def support_height(ground, x, y, yaw):
    """Máxima altura del suelo en la ventana de anticipación a lo largo del rumbo."""
    offsets = np.linspace(SUPPORT_WINDOW[0], SUPPORT_WINDOW[1], 10)
    return max(ground(x + t * np.cos(yaw), y + t * np.sin(yaw)) for t in offsets)


def _gait(distance, amplitude):
    swing = amplitude * np.sin(2.0 * np.pi * distance / STRIDE_LENGTH)
    # Ángulo negativo adelanta el pie; las piernas van en contrafase
    return -swing, swing


def _split(total, fractions):
    counts = [int(round(total * f)) for f in fractions[:-1]]
    counts.append(total - sum(counts))
    if min(counts) < 1:
        raise ValidationError(f'{total} fotogramas no alcanzan para todas las fases del guion.')
    return counts


def walk_line(rig, start, yaw, distance, count, ground=flat_ground, amplitude=GAIT_AMPLITUDE, travelled=0.0):
    frames = []
    for i in range(count):
        s = distance * i / max(count - 1, 1)
        x = start[0] + s * np.cos(yaw)
        y = start[1] + s * np.sin(yaw)
        z = support_height(ground, x, y, yaw) + rig.standing_height
        left, right = _gait(travelled + s, amplitude)
        frames.append(PoseFrame((x, y, z), yaw, left, right))
    return frames


def turn_in_place(rig, position, yaw_from, yaw_to, count):
    return [
        PoseFrame(position, yaw_from + (yaw_to - yaw_from) * (i + 1) / count)
        for i in range(count)
    ]


def sit_down(rig, foot_xy, yaw, ground_z, seat_height, count):
    """Baja la pelvis hacia atrás con los pies fijos hasta que la cadera queda a `seat_height`."""
    drop = seat_height - ground_z
    if not 0 < drop < rig.leg_length:
        raise ValidationError(f'Asiento a {seat_height} m fuera del alcance de la pierna.')
    final = np.arccos(drop / rig.leg_length)
    frames = []
    for i in range(count):
        angle = final * (i + 1) / count
        back = rig.leg_length * np.sin(angle)
        x = foot_xy[0] - back * np.cos(yaw)
        y = foot_xy[1] - back * np.sin(yaw)
        z = ground_z + rig.hip_drop + rig.leg_length * np.cos(angle)
        frames.append(PoseFrame((x, y, z), yaw, -angle, -angle))
    return frames


def walk_to(skeleton, distance=2.0, num_frames=40, fps=DEFAULT_FPS, ground=flat_ground):
    """Camina en línea recta `distance` metros hacia +X."""
    rig = BodyRig(skeleton)
    return assemble(skeleton, walk_line(rig, (0.0, 0.0), 0.0, distance, num_frames, ground), fps)


def climb_stairs(skeleton, distance=2.8, num_frames=40, fps=DEFAULT_FPS, ground=flat_ground):
    """Igual que `walk_to`, pero la altura de apoyo sigue los peldaños de `ground`."""
    return walk_to(skeleton, distance, num_frames, fps, ground)


def circle(skeleton, radius=1.0, num_frames=40, fps=DEFAULT_FPS, ground=flat_ground, turns=0.75):
    """Recorre un arco antihorario alrededor de (0, radius)."""
    if radius <= 0:
        raise ValidationError('El radio del círculo debe ser positivo.')
    rig = BodyRig(skeleton)
    frames = []
    for i in range(num_frames):
        theta = 2.0 * np.pi * turns * i / max(num_frames - 1, 1)
        x, y = radius * np.sin(theta), radius - radius * np.cos(theta)
        z = ground(x, y) + rig.standing_height
        left, right = _gait(radius * theta, GAIT_AMPLITUDE)
        frames.append(PoseFrame((x, y, z), theta, left, right))
    return assemble(skeleton, frames, fps)


def wave(skeleton, num_frames=40, fps=DEFAULT_FPS, ground=flat_ground, amplitude=0.3):
    """De pie en el origen, balancea el torso (y con él la mano)."""
    rig = BodyRig(skeleton)
    z = ground(0.0, 0.0) + rig.standing_height
    frames = []
    for i in range(num_frames):
        phase = 2.0 * np.pi * i / 10.0
        frames.append(PoseFrame((0.0, 0.0, z), 0.0, spine_roll=amplitude * np.sin(phase)))
    return assemble(skeleton, frames, fps)


def walk_and_wave(skeleton, distance=1.5, num_frames=40, fps=DEFAULT_FPS, ground=flat_ground):
    """Camina hacia +X y termina saludando."""
    rig = BodyRig(skeleton)
    walk_count, wave_count = _split(num_frames, (0.6, 0.4))
    frames = walk_line(rig, (0.0, 0.0), 0.0, distance, walk_count, ground)
    last = frames[-1]
    for i in range(wave_count):
        phase = 2.0 * np.pi * (i + 1) / 10.0
        frames.append(PoseFrame(last.position, 0.0, spine_roll=0.3 * np.sin(phase)))
    return assemble(skeleton, frames, fps)


def sit_on(skeleton, seat_front=1.5, seat_height=0.45, seat_depth=0.4, num_frames=40,
           fps=DEFAULT_FPS, ground_z=0.0):
    """
    Camina hacia un asiento cuyo frente está en x=`seat_front`, gira 180° y se
    sienta: la pelvis termina sobre el asiento, a `seat_depth`/2 de su frente.
    """
    rig = BodyRig(skeleton)
    drop = seat_height - ground_z
    if not 0 < drop < rig.leg_length:
        raise ValidationError(f'Asiento a {seat_height} m fuera del alcance de la pierna.')
    reach = rig.leg_length * np.sin(np.arccos(drop / rig.leg_length))
    stop = seat_front + seat_depth / 2.0 - reach
    if stop <= 0:
        raise ValidationError('El asiento está demasiado cerca del inicio para sentarse.')

    walk_count, turn_count, sit_count = _split(num_frames, (0.5, 0.2, 0.3))
    frames = walk_line(rig, (0.0, 0.0), 0.0, stop, walk_count, lambda x, y: ground_z)
    standing = (stop, 0.0, ground_z + rig.standing_height)
    frames += turn_in_place(rig, standing, 0.0, np.pi, turn_count)
    frames += sit_down(rig, (stop, 0.0), np.pi, ground_z, seat_height, sit_count)
    return assemble(skeleton, frames, fps)
