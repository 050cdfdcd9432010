# apps/diffusion/schedule.py
"""
Tabla de ruido lineal y los dos pasos elementales de la cadena:
el muestreo directo q(x_t | x_0) y el paso inverso con la media posterior.

Los pasos se numeran 1..T; el índice 0 representa ᾱ_0 = 1 (sin ruido).
"""

from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

DEFAULT_STEPS = 100
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray        # (T+1,), betas[0] = 0
    alphas: np.ndarray       # (T+1,), alphas[0] = 1
    alpha_bars: np.ndarray   # (T+1,), alpha_bars[0] = 1
    beta_start: float
    beta_end: float

    @property
    def steps(self):
        return len(self.betas) - 1

    def check_step(self, t, allow_zero=False):
        t = np.asarray(t)
        low = 0 if allow_zero else 1
        if t.size == 0 or (t < low).any() or (t > self.steps).any():
            raise ValidationError(f'Paso de difusión fuera de rango [{low}, {self.steps}]: {t.tolist()}')
        return t.astype(np.int64)

    def posterior(self, t):
        """Coeficientes (de x̂0, de x_t) y varianza β̃_t de q(x_{t-1} | x_t, x_0)."""
        t = int(self.check_step(t))
        beta, alpha = self.betas[t], self.alphas[t]
        bar, bar_prev = self.alpha_bars[t], self.alpha_bars[t - 1]
        coef_x0 = np.sqrt(bar_prev) * beta / (1.0 - bar)
        coef_xt = np.sqrt(alpha) * (1.0 - bar_prev) / (1.0 - bar)
        variance = beta * (1.0 - bar_prev) / (1.0 - bar)
        return coef_x0, coef_xt, variance

    def as_dict(self):
        return {'steps': self.steps, 'beta_start': self.beta_start, 'beta_end': self.beta_end}


def build_schedule(steps=DEFAULT_STEPS, beta_start=DEFAULT_BETA_START, beta_end=DEFAULT_BETA_END):
    if int(steps) != steps or steps < 1:
        raise ValidationError('El número de pasos T debe ser un entero ≥ 1.')
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValidationError(f'Rango de β inválido: se requiere 0 < {beta_start} ≤ {beta_end} < 1.')
    steps = int(steps)
    betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, steps)])
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    for array in (betas, alphas, alpha_bars):
        array.setflags(write=False)
    return NoiseSchedule(betas, alphas, alpha_bars, float(beta_start), float(beta_end))


def _per_item(values, ndim):
    """Difunde un coeficiente por elemento del lote sobre los ejes restantes."""
    values = np.asarray(values)
    if values.ndim == 0:
        return values
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(x0, t, noise, schedule: NoiseSchedule):
    """
    x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε. `t` es un entero o un vector con un paso por
    elemento del lote (primer eje).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ValidationError(f'ε con forma {noise.shape} distinta de x0 {x0.shape}.')
    t = schedule.check_step(t, allow_zero=True)
    bar = _per_item(schedule.alpha_bars[t], x0.ndim)
    return np.sqrt(bar) * x0 + np.sqrt(1.0 - bar) * noise


def forward_chain(x0, t, schedule: NoiseSchedule, rng):
    """Simula la cadena paso a paso: x_s = √α_s·x_{s−1} + √β_s·ε_s, s = 1..t."""
    x = np.asarray(x0, dtype=np.float64)
    for s in range(1, int(schedule.check_step(t, allow_zero=True)) + 1):
        x = np.sqrt(schedule.alphas[s]) * x + np.sqrt(schedule.betas[s]) * rng.standard_normal(x.shape)
    return x


def p_sample_step(x_t, x0_hat, t, schedule: NoiseSchedule, noise=None):
    """
    Un paso inverso: media posterior μ̃(x_t, x̂0) más √β̃_t·ruido. En t = 1 no
    se añade ruido y el resultado es exactamente x̂0.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    coef_x0, coef_xt, variance = schedule.posterior(t)
    if int(t) == 1:
        return x0_hat.copy()
    mean = coef_x0 * x0_hat + coef_xt * x_t
    if noise is None:
        return mean
    return mean + np.sqrt(variance) * np.asarray(noise, dtype=np.float64)
