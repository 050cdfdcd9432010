# apps/diffusion/normalizer.py
"""
Estadísticas por dimensión de los rasgos de entrenamiento. El denoiser
trabaja en el espacio normalizado; las banderas de contacto se dejan tal cual.
"""

from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd.tensor import Tensor
from apps.motion.representation import PoseFeatureLayout

STD_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class FeatureNormalizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        # Se guardan en float32 para que un checkpoint reproduzca los mismos valores
        for attr in ('mean', 'std'):
            array = np.asarray(getattr(self, attr), dtype=np.float32).astype(np.float64)
            if array.ndim != 1 or not np.isfinite(array).all():
                raise ValidationError(f'Normalizador con {attr} inválido.')
            array.setflags(write=False)
            object.__setattr__(self, attr, array)
        if self.mean.shape != self.std.shape or (self.std <= 0).any():
            raise ValidationError('El normalizador necesita media y desviación de igual ancho y std > 0.')

    @property
    def width(self):
        return len(self.mean)

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width))

    @classmethod
    def fit(cls, sequences, layout: PoseFeatureLayout, floor=STD_FLOOR):
        """Media y desviación poblacional sobre todos los fotogramas de `sequences`."""
        frames = np.concatenate([layout.check(s) for s in sequences], axis=0) if sequences else None
        if frames is None or len(frames) == 0:
            raise ValidationError('No hay fotogramas para ajustar el normalizador.')
        mean = frames.mean(axis=0)
        std = np.maximum(frames.std(axis=0), floor)
        mean[layout.contacts] = 0.0
        std[layout.contacts] = 1.0
        return cls(mean, std)

    def normalize(self, features):
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, features):
        return np.asarray(features, dtype=np.float64) * self.std + self.mean

    def denormalize_tensor(self, features: Tensor):
        return features * Tensor(self.std, dtype=features.dtype) + Tensor(self.mean, dtype=features.dtype)

    def state_dict(self):
        return {'normalizer.mean': self.mean, 'normalizer.std': self.std}

    @classmethod
    def from_state(cls, state):
        return cls(state['normalizer.mean'], state['normalizer.std'])
