# apps/autograd/nn.py
"""
Módulos con parámetros: capas lineales, normalización, atención multi-cabeza
y el bloque de atención LN(FFN(CA(q, c, c) + q)) que reutilizan la fusión,
el codificador de texto, el de puntos y el denoiser.
"""

from collections import OrderedDict

import numpy as np

from . import functional as F
from .exceptions import ShapeError
from .tensor import Parameter, Tensor, concat


class Module:
    """Contenedor de parámetros con nombres jerárquicos estables."""

    def named_parameters(self, prefix=''):
        params = OrderedDict()
        for attr, value in vars(self).items():
            full = f'{prefix}{attr}'
            if isinstance(value, Parameter):
                params[full] = value
            elif isinstance(value, Module):
                params.update(value.named_parameters(f'{full}.'))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        params.update(item.named_parameters(f'{full}.{i}.'))
                    elif isinstance(item, Parameter):
                        params[f'{full}.{i}'] = item
        return params

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        return OrderedDict((name, p.numpy()) for name, p in self.named_parameters().items())

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise ShapeError(f'Checkpoint incompatible: faltan {sorted(missing)}, sobran {sorted(unexpected)}')
        for name, param in params.items():
            param.assign(state[name])

    def parameter_count(self):
        return int(sum(p.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, in_features, out_features, rng, dtype=np.float64, bias=True):
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_features, out_features)), dtype=dtype)
        self.bias = Parameter(np.zeros(out_features), dtype=dtype) if bias else None

    def __call__(self, x: Tensor):
        if x.ndim == 1:
            return self(x.reshape(1, x.shape[0])).reshape(self.weight.shape[1])
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, width, dtype=np.float64, eps=1e-5):
        self.gain = Parameter(np.ones(width), dtype=dtype)
        self.bias = Parameter(np.zeros(width), dtype=dtype)
        self.eps = eps

    def __call__(self, x):
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """FFN con residual interno: x + W2·gelu(W1·x + b1) + b2."""

    def __init__(self, width, rng, dtype=np.float64, multiplier=2):
        self.inner = Linear(width, width * multiplier, rng, dtype)
        self.outer = Linear(width * multiplier, width, rng, dtype)

    def __call__(self, x):
        return x + self.outer(F.gelu(self.inner(x)))


class MultiHeadAttention(Module):
    def __init__(self, width, rng, dtype=np.float64, heads=1, context_width=None):
        if width % heads:
            raise ShapeError(f'El ancho {width} no es divisible entre {heads} cabezas.')
        context_width = context_width or width
        self.heads = heads
        self.query = Linear(width, width, rng, dtype)
        self.key = Linear(context_width, width, rng, dtype)
        self.value = Linear(context_width, width, rng, dtype)
        self.output = Linear(width, width, rng, dtype)

    def _split(self, x):
        # (..., L, d) -> (..., h, L, d/h)
        *lead, length, width = x.shape
        x = x.reshape(*lead, length, self.heads, width // self.heads)
        axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
        return x.transpose(*axes)

    def _merge(self, x):
        *lead, heads, length, head_width = x.shape
        axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
        return x.transpose(*axes).reshape(*lead, length, heads * head_width)

    def __call__(self, x, context=None, valid=None):
        context = x if context is None else context
        q, k, v = self.query(x), self.key(context), self.value(context)
        if self.heads == 1:
            return self.output(F.attention(q, k, v, valid=valid))
        if valid is not None:
            valid = np.asarray(valid, dtype=bool)[..., None, :]
        out = F.attention(self._split(q), self._split(k), self._split(v), valid=valid)
        return self.output(self._merge(out))


class AttentionBlock(Module):
    """
    LN(FFN(CA(q, c, c) + q)): residual antes de la FFN y normalización al final.
    Con `context=None` es un bloque de autoatención.
    """

    def __init__(self, width, rng, dtype=np.float64, heads=1, context_width=None, multiplier=2, final_norm=True):
        self.attn = MultiHeadAttention(width, rng, dtype, heads, context_width)
        self.ffn = FeedForward(width, rng, dtype, multiplier)
        self.norm = LayerNorm(width, dtype) if final_norm else None

    def __call__(self, query, context=None, valid=None):
        hidden = self.ffn(self.attn(query, context, valid) + query)
        return self.norm(hidden) if self.norm is not None else hidden


def sinusoidal_table(length, width, dtype=np.float64):
    """Codificación posicional sinusoidal (L×d)."""
    positions = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, width, 2) / width))
    table = np.zeros((length, width))
    table[:, 0::2] = np.sin(positions * rates)
    table[:, 1::2] = np.cos(positions * rates[: width // 2])
    return table.astype(dtype)


def timestep_embedding(steps, width, dtype=np.float64):
    """Embedding sinusoidal de pasos de difusión; `steps` es un vector de enteros."""
    steps = np.asarray(steps, dtype=np.float64).reshape(-1, 1)
    half = width // 2
    rates = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    angles = steps * rates
    table = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    if width % 2:
        table = np.concatenate([table, np.zeros((table.shape[0], 1))], axis=1)
    return table.astype(dtype)


def mean_rows(x: Tensor, order=None):
    """
    Promedio sobre filas (eje -2). `order` fija el orden de reducción para que
    el resultado sea idéntico bit a bit ante permutaciones de las filas.
    """
    if order is not None:
        x = x.take(order)
    return x.mean(axis=-2)


def concat_features(*tensors):
    return concat(tensors, axis=-1)
