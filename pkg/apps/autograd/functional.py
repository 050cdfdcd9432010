# apps/autograd/functional.py
"""
Operaciones compuestas: softmax estable, normalización de capa, atención
por producto escalar y pérdidas cuadráticas.
"""

import numpy as np

from .exceptions import ShapeError
from .tensor import Tensor, _make, as_tensor, gelu  # noqa: F401  (gelu se reexporta)


def softmax(x: Tensor, axis=-1, valid=None):
    """
    Softmax con resta del máximo. `valid` (booleano, difundible a la forma de x)
    marca las posiciones que participan; las demás reciben probabilidad 0.
    """
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError('softmax sobre un eje vacío.')
    data = x.data
    if valid is not None:
        valid = np.broadcast_to(np.asarray(valid, dtype=bool), data.shape)
        if not valid.any(axis=axis).all():
            raise ShapeError('softmax: hay una fila sin posiciones válidas.')
        data = np.where(valid, data, -np.inf)
    shifted = data - data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make('softmax', y, (x,), backward)


def log_softmax(x: Tensor, axis=-1):
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError('log_softmax sobre un eje vacío.')
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make('log_softmax', out, (x,), backward)


def layer_norm(x: Tensor, gain=None, bias=None, eps=1e-5):
    """Normaliza sobre el último eje con varianza poblacional."""
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ShapeError('layer_norm: el último eje está vacío.')
    if eps <= 0:
        raise ShapeError('layer_norm: eps debe ser positivo.')
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered * (variance + eps) ** -0.5
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def attention(query: Tensor, key: Tensor, value: Tensor, valid=None, scale=None):
    """
    Atención por producto escalar escalado: softmax(QKᵀ/√d)V.

    Q es (..., Lq, d), K es (..., Lk, d), V es (..., Lk, dv). `valid` tiene la
    forma (..., Lk) y excluye claves (p. ej. fotogramas de relleno).
    """
    if key.shape[-2] == 0:
        raise ShapeError('attention: no hay claves (L_k = 0).')
    if query.shape[-1] != key.shape[-1]:
        raise ShapeError(f'attention: dimensión de Q {query.shape} y K {key.shape} no coinciden.')
    if key.shape[-2] != value.shape[-2]:
        raise ShapeError(f'attention: K {key.shape} y V {value.shape} con distinto número de filas.')
    if scale is None:
        scale = 1.0 / np.sqrt(query.shape[-1])
    scores = (query @ key.swapaxes(-1, -2)) * scale
    mask = None
    if valid is not None:
        mask = np.asarray(valid, dtype=bool)[..., None, :]
    weights = softmax(scores, axis=-1, valid=mask)
    return weights @ value


def mse(prediction: Tensor, target, weights=None):
    """Error cuadrático medio; `weights` (0/1) excluye elementos del promedio."""
    target = as_tensor(target, like=prediction)
    diff = prediction - target
    squared = diff * diff
    if weights is None:
        return squared.mean()
    weights = np.broadcast_to(np.asarray(weights, dtype=prediction.dtype), prediction.shape)
    total = float(weights.sum())
    if total == 0:
        return (squared * 0.0).sum()
    return (squared * weights).sum() * (1.0 / total)


def l2_normalize(x: Tensor, axis=-1, eps=1e-12):
    norm = ((x * x).sum(axis=axis, keepdims=True) + eps) ** 0.5
    return x / norm
