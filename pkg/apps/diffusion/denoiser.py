# apps/diffusion/denoiser.py
"""
Transformer sobre N fotogramas más un token de condición. El token de
condición es la proyección de z_c sumada al embedding sinusoidal del paso t.
Predice directamente el movimiento limpio x̂0.
"""

import numpy as np

from apps.autograd.exceptions import ShapeError
from apps.autograd.nn import AttentionBlock, Linear, Module, sinusoidal_table, timestep_embedding
from apps.autograd.tensor import Tensor, concat


class Denoiser(Module):
    def __init__(self, feature_width, width, cond_width, rng, dtype=np.float64, heads=1, layers=2,
                 max_frames=64):
        self.input_projection = Linear(feature_width, width, rng, dtype)
        self.cond_projection = Linear(cond_width, width, rng, dtype)
        self.time_projection = Linear(width, width, rng, dtype)
        self.blocks = [AttentionBlock(width, rng, dtype, heads=heads) for _ in range(layers)]
        self.output_projection = Linear(width, feature_width, rng, dtype)
        self.positions = sinusoidal_table(max_frames, width, dtype)
        self.feature_width = feature_width
        self.width = width
        self.cond_width = cond_width
        self.max_frames = max_frames
        self.dtype = dtype

    def __call__(self, x_t, t, z_c, valid=None):
        """
        x_t: B×N×d (Tensor o arreglo), t: B pasos, z_c: B×d_c, valid: B×N booleano.
        Devuelve x̂0 con la forma de x_t.
        """
        x_t = x_t if isinstance(x_t, Tensor) else Tensor(x_t, dtype=self.dtype)
        if x_t.ndim != 3 or x_t.shape[2] != self.feature_width:
            raise ShapeError(f'El denoiser espera B×N×{self.feature_width}, recibió {x_t.shape}.')
        batch, frames, _ = x_t.shape
        if frames > self.max_frames:
            raise ShapeError(f'{frames} fotogramas superan el máximo de {self.max_frames}.')
        if z_c.shape != (batch, self.cond_width):
            raise ShapeError(f'z_c con forma {z_c.shape}; se esperaba ({batch}, {self.cond_width}).')

        steps = np.broadcast_to(np.asarray(t), (batch,))
        time = self.time_projection(Tensor(timestep_embedding(steps, self.width, self.dtype)))
        cond_token = (self.cond_projection(z_c) + time).reshape(batch, 1, self.width)
        frame_tokens = self.input_projection(x_t) + Tensor(self.positions[:frames])
        hidden = concat([cond_token, frame_tokens], axis=1)

        mask = None
        if valid is not None:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != (batch, frames):
                raise ShapeError(f'Máscara de validez {valid.shape}; se esperaba ({batch}, {frames}).')
            mask = np.concatenate([np.ones((batch, 1), dtype=bool), valid], axis=1)
        for block in self.blocks:
            hidden = block(hidden, valid=mask)
        return self.output_projection(hidden[:, 1:])
