# apps/diffusion/model.py
"""
Modelo completo: codificador de texto + módulo de fusión + denoiser.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from apps.autograd.nn import Module
from apps.autograd.tensor import Tensor, stack
from apps.fusion.condition import ConditionModule
from apps.language.encoder import TextEncoder
from apps.language.vocab import TextPrompt

from .denoiser import Denoiser

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelShape:
    """Hiperparámetros que definen la forma de los parámetros."""

    feature_width: int
    vocab_size: int
    width: int = 64
    text_width: int = 64
    cond_width: int = 128
    heads: int = 1
    text_blocks: int = 2
    denoiser_layers: int = 2
    neighbours: int = 16
    global_points: int = 256
    max_frames: int = 64
    fusion_kind: str = 'parallel_cross'
    pad_id: int = 0

    def as_dict(self):
        return dict(vars(self))


@dataclass
class ConditionInput:
    """Escena (f_p, M×6) y prompt de una secuencia."""

    f_p: np.ndarray
    prompt: TextPrompt
    extras: dict = field(default_factory=dict)


class MotionDiffusionModel(Module):
    def __init__(self, shape: ModelShape, rng, dtype=np.float64):
        self.text_encoder = TextEncoder(shape.vocab_size, shape.text_width, rng, dtype, heads=shape.heads,
                                        blocks=shape.text_blocks, pad_id=shape.pad_id)
        self.condition = ConditionModule(shape.fusion_kind, shape.width, shape.text_width, shape.cond_width, rng,
                                         dtype, heads=shape.heads, neighbours=shape.neighbours,
                                         global_points=shape.global_points)
        self.denoiser = Denoiser(shape.feature_width, shape.width, shape.cond_width, rng, dtype,
                                 heads=shape.heads, layers=shape.denoiser_layers, max_frames=shape.max_frames)
        self.shape = shape
        self.dtype = dtype
        logger.debug(f'Modelo creado: {self.parameter_count()} parámetros, fusión {shape.fusion_kind}')

    @property
    def fusion_kind(self):
        return self.shape.fusion_kind

    def embed_condition(self, item: ConditionInput):
        """z_c (d_c) para una escena y su texto."""
        F_l = self.text_encoder(item.prompt)
        condition, _ = self.condition(item.f_p, F_l)
        return condition.z

    def embed_conditions(self, items):
        return stack([self.embed_condition(item) for item in items], axis=0)

    def null_condition(self, batch):
        return Tensor(np.zeros((batch, self.shape.cond_width)), dtype=self.dtype)

    def __call__(self, x_t, t, z_c, valid=None):
        return self.denoiser(x_t, t, z_c, valid)
