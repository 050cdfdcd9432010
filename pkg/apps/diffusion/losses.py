# apps/diffusion/losses.py
"""
Pérdida de entrenamiento: reconstrucción del movimiento limpio más los
términos geométricos (posiciones, velocidades y deslizamiento de pies).
"""

from dataclasses import dataclass

import numpy as np

from apps.autograd import functional as F
from apps.autograd.tensor import Tensor
from apps.motion.representation import PoseFeatureLayout, decode_positions_tensor

from .normalizer import FeatureNormalizer
from .schedule import NoiseSchedule, q_sample

REPORT_FIELDS = ('motion', 'position', 'velocity', 'foot', 'total')


@dataclass(frozen=True)
class LossWeights:
    position: float = 1.0
    velocity: float = 1.0
    foot: float = 1.0


@dataclass(frozen=True)
class LossReport:
    motion: float
    position: float
    velocity: float
    foot: float
    total: float

    def as_dict(self):
        return {name: getattr(self, name) for name in REPORT_FIELDS}


@dataclass
class TrainingBatch:
    """x0 normalizado (B×N×d), máscara de validez (B×N) y la condición z_c (B×d_c)."""

    x0: np.ndarray
    valid: np.ndarray
    z_c: Tensor


def geometric_terms(prediction: Tensor, target, valid, normalizer: FeatureNormalizer, layout: PoseFeatureLayout,
                    foot_joints):
    """
    Decodifica predicción y referencia a posiciones y devuelve (L_pos, L_vel, L_foot).
    Los fotogramas inválidos quedan fuera de los promedios.
    """
    valid = np.asarray(valid, dtype=np.float64)
    target_raw = normalizer.denormalize(target)
    pred_positions = decode_positions_tensor(normalizer.denormalize_tensor(prediction), layout)
    true_positions = decode_positions_tensor(Tensor(target_raw), layout).data

    position = F.mse(pred_positions, true_positions, weights=valid[:, :, None, None])

    pair = valid[:, 1:] * valid[:, :-1]
    pred_velocity = pred_positions[:, 1:] - pred_positions[:, :-1]
    true_velocity = true_positions[:, 1:] - true_positions[:, :-1]
    velocity = F.mse(pred_velocity, true_velocity, weights=pair[:, :, None, None])

    feet = list(foot_joints)
    contacts = target_raw[:, :-1, layout.contacts] * pair[:, :, None]
    foot = F.mse(pred_velocity[:, :, feet], true_velocity[:, :, feet], weights=contacts[:, :, :, None])
    return position, velocity, foot


def reconstruction_loss(prediction: Tensor, target, valid):
    """L_motion: error cuadrático medio entre x0 y x̂0 sobre fotogramas válidos."""
    valid = np.asarray(valid, dtype=np.float64)
    return F.mse(prediction, target, weights=valid[:, :, None])


def combine_losses(motion, position, velocity, foot, weights: LossWeights):
    total = motion + position * weights.position + velocity * weights.velocity + foot * weights.foot
    report = LossReport(
        motion=motion.item(), position=position.item(), velocity=velocity.item(), foot=foot.item(),
        total=total.item(),
    )
    return total, report


def training_loss(model, batch: TrainingBatch, schedule: NoiseSchedule, normalizer: FeatureNormalizer,
                  layout: PoseFeatureLayout, foot_joints, rng, weights=LossWeights(), cond_dropout=0.0):
    """
    Un paso de pérdida: t uniforme en 1..T por elemento, x_t por q_sample y
    predicción de x̂0. Con `cond_dropout` > 0 algunas condiciones se anulan.
    Devuelve (pérdida total como Tensor, LossReport).
    """
    x0 = np.asarray(batch.x0, dtype=np.float64)
    size = x0.shape[0]
    t = rng.integers(1, schedule.steps + 1, size=size)
    noise = rng.standard_normal(x0.shape)
    x_t = q_sample(x0, t, noise, schedule)

    z_c = batch.z_c
    if cond_dropout > 0:
        keep = (rng.random(size) >= cond_dropout).astype(np.float64)
        z_c = z_c * keep[:, None]

    prediction = model(x_t, t, z_c, batch.valid)
    motion = reconstruction_loss(prediction, x0, batch.valid)
    position, velocity, foot = geometric_terms(prediction, x0, batch.valid, normalizer, layout, foot_joints)
    return combine_losses(motion, position, velocity, foot, weights)
