# apps/language/encoder.py
"""
Codificador de texto entrenable: embedding de tokens + posiciones sinusoidales
+ bloques de autoatención. Produce un rasgo por token (F_l).
"""

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd.nn import AttentionBlock, Module, sinusoidal_table
from apps.autograd.tensor import Parameter, Tensor

from .vocab import MAX_LENGTH, TextPrompt


class TextEncoder(Module):
    def __init__(self, vocab_size, width, rng, dtype=np.float64, heads=1, blocks=2, max_length=MAX_LENGTH,
                 pad_id=0):
        self.embedding = Parameter(rng.normal(scale=width ** -0.5, size=(vocab_size, width)), dtype=dtype)
        self.blocks = [AttentionBlock(width, rng, dtype, heads=heads) for _ in range(blocks)]
        self.positions = sinusoidal_table(max_length, width, dtype)
        self.vocab_size = vocab_size
        self.max_length = max_length
        self.pad_id = pad_id
        self.width = width

    def active_length(self, ids):
        """Tokens antes del primer <pad>."""
        pads = np.flatnonzero(ids == self.pad_id)
        return int(pads[0]) if len(pads) else len(ids)

    def __call__(self, prompt):
        ids = prompt.active_ids() if isinstance(prompt, TextPrompt) else np.asarray(prompt, dtype=np.int64)
        if ids.ndim != 1:
            raise ValidationError('encode_text espera una secuencia de ids.')
        if len(ids) > self.max_length:
            raise ValidationError(f'Secuencia de {len(ids)} tokens; el máximo es {self.max_length}.')
        if len(ids) and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValidationError('Id de token fuera del vocabulario.')
        ids = ids[:self.active_length(ids)]
        if len(ids) == 0:
            raise ValidationError('encode_text necesita al menos un token distinto de <pad>.')
        hidden = self.embedding.take(ids) + Tensor(self.positions[:len(ids)])
        for block in self.blocks:
            hidden = block(hidden)
        return hidden


def encode_text(encoder: TextEncoder, prompt):
    """F_l (L×d_text) para las posiciones reales del prompt."""
    return encoder(prompt)
