# apps/fusion/condition.py
"""
Módulo de fusión multi-condición y sus variantes de ablación.

Todas las variantes reciben (F_l', F_pc') y devuelven z_c con el mismo ancho.
El módulo completo trabaja con la nube en orden canónico, de modo que z_c no
depende del orden de los puntos de entrada.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from django.core.exceptions import ValidationError

from apps.autograd import functional as F
from apps.autograd.exceptions import ShapeError
from apps.autograd.nn import AttentionBlock, Linear, Module, MultiHeadAttention, concat_features, mean_rows
from apps.autograd.tensor import Tensor, concat

from .points import POINT_FEATURES, PointEncoder, canonical_order

logger = logging.getLogger(__name__)

FUSION_KINDS = ('parallel_cross', 'scene_queried', 'text_queried', 'triple', 'concat_self')


@dataclass
class ConditionEmbedding:
    z: Tensor
    kind: str

    @property
    def width(self):
        return self.z.shape[-1]


@dataclass
class FusionActivations:
    f_p: np.ndarray
    order: np.ndarray
    F_p: Optional[Tensor] = None
    F_l: Optional[Tensor] = None
    F_p_enhanced: Optional[Tensor] = None
    F_l_enhanced: Optional[Tensor] = None
    F_pc: Optional[Tensor] = None
    extras: dict = field(default_factory=dict)


class SelfEnhance(Module):
    """x + MHA(x) por modalidad; el texto se proyecta antes a d."""

    def __init__(self, width, text_width, rng, dtype=np.float64, heads=1):
        self.text_projection = Linear(text_width, width, rng, dtype)
        self.scene_attn = MultiHeadAttention(width, rng, dtype, heads)
        self.text_attn = MultiHeadAttention(width, rng, dtype, heads)

    def __call__(self, F_p, F_l):
        text = self.text_projection(F_l)
        return F_p + self.scene_attn(F_p), text + self.text_attn(text)


def self_enhance(module: SelfEnhance, F_p, F_l):
    return module(F_p, F_l)


def position_inject(layer: Linear, F_p_enhanced, f_p):
    """F_pc' = FC(F_p' ⊕ f_p)."""
    f_p = np.asarray(f_p)
    if F_p_enhanced.shape[0] != f_p.shape[0]:
        raise ShapeError(f'position_inject: {F_p_enhanced.shape[0]} filas de escena y {f_p.shape[0]} puntos.')
    raw = Tensor(f_p, dtype=F_p_enhanced.dtype)
    return layer(concat_features(F_p_enhanced, raw))


def _require_rows(*tensors):
    for tensor in tensors:
        if tensor.shape[0] == 0:
            raise ShapeError('La fusión requiere al menos una fila de texto y una de escena.')


def parallel_cross_fuse(text_block: AttentionBlock, scene_block: AttentionBlock, F_l, F_pc):
    """F_L = LN(FFN(CA(F_l', F_pc') + F_l')), F_P = LN(FFN(CA(F_pc', F_l') + F_pc'))."""
    _require_rows(F_l, F_pc)
    return text_block(F_l, F_pc), scene_block(F_pc, F_l)


def make_condition(head: Linear, *parts):
    """Promedio por filas de cada parte, concatenación y proyección a d_c."""
    return head(concat([mean_rows(part) for part in parts], axis=-1))


class FusionVariant(Module):
    kind = None
    pooled_parts = 0

    def __init__(self, width, cond_width, rng, dtype):
        self.head = Linear(width * self.pooled_parts, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        raise NotImplementedError

    def __call__(self, F_l, F_pc):
        _require_rows(F_l, F_pc)
        parts, extras = self.fuse(F_l, F_pc)
        return make_condition(self.head, *parts), extras


class ParallelCrossFusion(FusionVariant):
    kind = 'parallel_cross'
    pooled_parts = 3

    def __init__(self, width, cond_width, rng, dtype=np.float64, heads=1):
        self.text_block = AttentionBlock(width, rng, dtype, heads)
        self.scene_block = AttentionBlock(width, rng, dtype, heads)
        super().__init__(width, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        F_L, F_P = parallel_cross_fuse(self.text_block, self.scene_block, F_l, F_pc)
        return (F_l, F_P, F_L), {'F_L': F_L, 'F_P': F_P}


class SceneQueriedFusion(FusionVariant):
    """Dos bloques con consultas de escena; z_c a partir de F_P ⊕ F_l'."""

    kind = 'scene_queried'
    pooled_parts = 2

    def __init__(self, width, cond_width, rng, dtype=np.float64, heads=1):
        self.first = AttentionBlock(width, rng, dtype, heads)
        self.second = AttentionBlock(width, rng, dtype, heads)
        super().__init__(width, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        F_pq = self.first(F_pc, F_l)
        F_P = self.second(F_pc, F_pq)
        return (F_P, F_l), {'F_pq': F_pq, 'F_P': F_P}


class TextQueriedFusion(FusionVariant):
    kind = 'text_queried'
    pooled_parts = 2

    def __init__(self, width, cond_width, rng, dtype=np.float64, heads=1):
        self.first = AttentionBlock(width, rng, dtype, heads)
        self.second = AttentionBlock(width, rng, dtype, heads)
        super().__init__(width, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        F_lq = self.first(F_l, F_pc)
        F_L = self.second(F_l, F_lq)
        return (F_L, F_l), {'F_lq': F_lq, 'F_L': F_L}


class TripleFusion(FusionVariant):
    """
    Mapa de similitud W = softmax(F_pc' F_l'ᵀ) normalizado sobre el eje de
    escena; F_P' = Wᵀ F_pc' es una combinación convexa de rasgos por token.
    """

    kind = 'triple'
    pooled_parts = 3

    def __init__(self, width, cond_width, rng, dtype=np.float64, heads=1):
        self.text_block = AttentionBlock(width, rng, dtype, heads)
        super().__init__(width, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        W = F.softmax(F_pc @ F_l.T, axis=0)
        F_P = W.T @ F_pc
        F_L = self.text_block(F_l, F_pc)
        return (F_P, F_l, F_L), {'W': W, 'F_P': F_P, 'F_L': F_L}


class ConcatSelfFusion(FusionVariant):
    """Sin consultas cruzadas: autoatención sobre [F_l'; F_pc']."""

    kind = 'concat_self'
    pooled_parts = 2

    def __init__(self, width, cond_width, rng, dtype=np.float64, heads=1):
        self.block = AttentionBlock(width, rng, dtype, heads)
        super().__init__(width, cond_width, rng, dtype)

    def fuse(self, F_l, F_pc):
        tokens = F_l.shape[0]
        joint = self.block(concat([F_l, F_pc], axis=0))
        text, scene = joint[:tokens], joint[tokens:]
        return (text, scene), {'joint': joint}


FUSION_VARIANTS = {
    cls.kind: cls
    for cls in (ParallelCrossFusion, SceneQueriedFusion, TextQueriedFusion, TripleFusion, ConcatSelfFusion)
}


def build_fusion(kind, width, cond_width, rng, dtype=np.float64, heads=1):
    try:
        variant = FUSION_VARIANTS[kind]
    except KeyError:
        raise ValidationError(f"Variante de fusión desconocida '{kind}'. Opciones: {list(FUSION_KINDS)}")
    return variant(width, cond_width, rng, dtype, heads)


def fuse_variant(variant: FusionVariant, F_l, F_pc):
    z, _ = variant(F_l, F_pc)
    return ConditionEmbedding(z=z, kind=variant.kind)


class ConditionModule(Module):
    """
    De (f_p, F_l) a z_c: codificación de escena, auto-realce, inyección de
    posición y la variante de fusión configurada.
    """

    def __init__(self, kind, width, text_width, cond_width, rng, dtype=np.float64, heads=1,
                 neighbours=16, global_points=256):
        self.point_encoder = PointEncoder(width, rng, dtype, heads, neighbours, global_points)
        self.enhance = SelfEnhance(width, text_width, rng, dtype, heads)
        self.inject = Linear(width + POINT_FEATURES, width, rng, dtype)
        self.variant = build_fusion(kind, width, cond_width, rng, dtype, heads)
        self.kind = kind
        self.cond_width = cond_width

    def __call__(self, f_p, F_l, keep_activations=False):
        f_p = np.asarray(f_p, dtype=np.float64)
        if f_p.ndim != 2 or f_p.shape[1] != POINT_FEATURES or len(f_p) == 0:
            raise ValidationError(f'f_p debe ser M×6 con M ≥ 1, forma {f_p.shape}.')
        order = canonical_order(f_p)
        ordered = f_p[order]
        F_p = self.point_encoder.encode_sorted(ordered)
        F_p_enhanced, F_l_enhanced = self.enhance(F_p, F_l)
        F_pc = position_inject(self.inject, F_p_enhanced, ordered)
        z, extras = self.variant(F_l_enhanced, F_pc)
        condition = ConditionEmbedding(z=z, kind=self.kind)
        if not keep_activations:
            return condition, None
        activations = FusionActivations(
            f_p=ordered, order=order, F_p=F_p, F_l=F_l,
            F_p_enhanced=F_p_enhanced, F_l_enhanced=F_l_enhanced, F_pc=F_pc, extras=extras,
        )
        return condition, activations
