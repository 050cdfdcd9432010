# apps/autograd/gradcheck.py
"""
Comprobación de gradientes por diferencias finitas centradas (doble precisión).
"""

import numpy as np

from .tensor import GradTape


def analytic_gradients(loss_fn, params):
    with GradTape() as tape:
        loss = loss_fn()
    grads = tape.backward(loss)
    return [grads.get(p, np.zeros_like(p.data)) for p in params]


def numeric_gradient(loss_fn, param, indices, step=1e-5):
    original = param.data.copy()
    values = []
    for flat in indices:
        probe = original.copy().reshape(-1)
        probe[flat] += step
        param.assign(probe.reshape(original.shape))
        plus = loss_fn().item()
        probe[flat] -= 2 * step
        param.assign(probe.reshape(original.shape))
        minus = loss_fn().item()
        values.append((plus - minus) / (2 * step))
    param.assign(original)
    return np.array(values)


def relative_error(analytic, numeric, floor=1e-6):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(loss_fn, params, step=1e-5, max_entries=12, seed=0):
    """
    Devuelve el peor error relativo entre gradiente analítico y numérico sobre
    todas las hojas. En hojas grandes solo se sondea una muestra de entradas.
    """
    rng = np.random.default_rng(seed)
    analytic = analytic_gradients(loss_fn, params)
    worst = 0.0
    for param, grad in zip(params, analytic):
        size = param.data.size
        if size <= max_entries:
            indices = np.arange(size)
        else:
            indices = np.sort(rng.choice(size, size=max_entries, replace=False))
        numeric = numeric_gradient(loss_fn, param, indices, step)
        worst = max(worst, relative_error(grad.reshape(-1)[indices], numeric))
    return worst
