# apps/diffusion/sampler.py
"""
Cadena inversa: parte de x_T ~ N(0, I), predice x̂0 en cada paso y vuelve a
añadir ruido hasta t = 1. Cada muestra depende solo de su escena, su texto y
su semilla.
"""

import logging

import numpy as np

from apps.autograd.tensor import Tensor
from apps.motion.representation import DEFAULT_FPS, MotionSequence

from .normalizer import FeatureNormalizer
from .schedule import NoiseSchedule, p_sample_step

logger = logging.getLogger(__name__)


def reverse_chain(predict_x0, shape, schedule: NoiseSchedule, rng, deterministic=False):
    """
    Ejecuta la cadena inversa completa. `predict_x0(x_t, t)` devuelve x̂0 como
    arreglo. Con `deterministic` no se añade ruido en los pasos intermedios.
    """
    x = rng.standard_normal(shape)
    for t in range(schedule.steps, 0, -1):
        x0_hat = predict_x0(x, t)
        noise = None if deterministic or t == 1 else rng.standard_normal(shape)
        x = p_sample_step(x, x0_hat, t, schedule, noise)
    return x


def guided_prediction(model, x_t, t, z_c, guidance_scale=1.0):
    """x̂0 = x̂0_incond + s·(x̂0_cond − x̂0_incond); con s = 1 es la predicción condicionada."""
    conditioned = model(x_t, [t] * x_t.shape[0], z_c).data
    if guidance_scale == 1.0:
        return conditioned
    unconditioned = model(x_t, [t] * x_t.shape[0], model.null_condition(x_t.shape[0])).data
    return unconditioned + guidance_scale * (conditioned - unconditioned)


def features_to_motion(features, fps=DEFAULT_FPS, num_joints=None):
    """Decodifica con la raíz inicial en el origen horizontal de la escena y rumbo 0."""
    features = np.asarray(features, dtype=np.float64)
    return MotionSequence.from_features(features, (0.0, 0.0, float(features[0, 3])), 0.0, fps=fps,
                                        num_joints=num_joints)


def sample(model, item, schedule: NoiseSchedule, normalizer: FeatureNormalizer, num_frames=40, seed=0,
           guidance_scale=1.0, fps=DEFAULT_FPS):
    """Una muestra (MotionSequence) para una condición (ConditionInput)."""
    rng = np.random.default_rng(seed)
    z_c = model.embed_condition(item).data.reshape(1, -1)
    z_c = Tensor(z_c, dtype=model.dtype)
    shape = (1, num_frames, model.shape.feature_width)

    def predict(x_t, t):
        return guided_prediction(model, Tensor(x_t, dtype=model.dtype), t, z_c, guidance_scale)

    normalized = reverse_chain(predict, shape, schedule, rng)
    features = normalizer.denormalize(normalized[0])
    logger.debug(f'Muestra generada (semilla {seed}, {num_frames} fotogramas)')
    return features_to_motion(features, fps=fps)
