# apps/fusion/points.py
"""
Codificador de puntos simplificado: mapa puntual compartido, atención local
sobre k vecinos y un bloque global sobre un subconjunto FPS cuyos rasgos se
propagan por asignación al punto del subconjunto más cercano.
"""

import numpy as np
from django.core.exceptions import ValidationError
from scipy.spatial import cKDTree

from apps.autograd import functional as F
from apps.autograd.nn import AttentionBlock, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention
from apps.autograd.tensor import Tensor, concat
from apps.scenes.cloud import farthest_point_indices

POINT_FEATURES = 6


def canonical_order(f_p):
    """Orden lexicográfico de las filas de f_p (x, luego y, z, r, g, b)."""
    f_p = np.asarray(f_p)
    return np.lexsort(f_p.T[::-1])


class PointEncoder(Module):
    def __init__(self, width, rng, dtype=np.float64, heads=1, neighbours=16, global_points=256):
        self.embed = Linear(POINT_FEATURES, width, rng, dtype)
        self.local_attn = MultiHeadAttention(width, rng, dtype, heads, context_width=width + 3)
        self.local_ffn = FeedForward(width, rng, dtype)
        self.global_block = AttentionBlock(width, rng, dtype, heads=heads)
        self.norm = LayerNorm(width, dtype)
        self.neighbours = neighbours
        self.global_points = global_points
        self.width = width
        self.dtype = dtype

    def encode_sorted(self, f_p):
        """F_p para una nube ya en orden canónico."""
        f_p = np.asarray(f_p, dtype=np.float64)
        if f_p.ndim != 2 or f_p.shape[1] != POINT_FEATURES:
            raise ValidationError(f'Se esperaban rasgos de punto M×6, forma {f_p.shape}.')
        count = len(f_p)
        if count == 0:
            raise ValidationError('encode_scene sobre una nube vacía.')
        xyz = f_p[:, :3]
        hidden = F.gelu(self.embed(Tensor(f_p, dtype=self.dtype)))

        k = min(self.neighbours, count)
        _, neighbours = cKDTree(xyz).query(xyz, k=k)
        neighbours = np.asarray(neighbours, dtype=np.int64).reshape(count, k)
        relative = Tensor(xyz[neighbours] - xyz[:, None, :], dtype=self.dtype)
        context = concat([hidden.take(neighbours), relative], axis=-1)
        local = self.local_attn(hidden.reshape(count, 1, self.width), context).reshape(count, self.width)
        hidden = self.local_ffn(hidden + local)

        subset = farthest_point_indices(xyz, self.global_points)
        summary = self.global_block(hidden.take(subset))
        _, owner = cKDTree(xyz[subset]).query(xyz, k=1)
        owner = np.asarray(owner, dtype=np.int64).reshape(count)
        return self.norm(hidden + summary.take(owner))

    def __call__(self, f_p):
        """F_p en el orden de entrada (equivariante a permutaciones de filas)."""
        f_p = np.asarray(f_p, dtype=np.float64)
        if f_p.ndim != 2 or len(f_p) == 0:
            raise ValidationError('encode_scene sobre una nube vacía.')
        order = canonical_order(f_p)
        inverse = np.argsort(order)
        return self.encode_sorted(f_p[order]).take(inverse)


def encode_scene(encoder: PointEncoder, f_p):
    return encoder(f_p)
