# apps/autograd/optim.py

import numpy as np

from .exceptions import GradientError


class Adam:
    """
    Adam con corrección de sesgo. El estado (momentos y paso) se puede guardar
    y restaurar para que una reanudación continúe de forma idéntica.
    """

    def __init__(self, named_parameters, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(named_parameters)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, grads):
        """`grads` es el diccionario {parámetro: gradiente} devuelto por la cinta."""
        self.step_count += 1
        t = self.step_count
        for name, param in self.params.items():
            grad = grads.get(param)
            if grad is None:
                continue
            if grad.shape != param.shape:
                raise GradientError(f'Gradiente de forma {grad.shape} para {name} {param.shape}')
            grad = grad.astype(param.dtype, copy=False)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = self.m[name] / (1 - self.beta1 ** t)
            v_hat = self.v[name] / (1 - self.beta2 ** t)
            param.assign(param.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))

    def state_dict(self):
        state = {}
        for name in self.params:
            state[f'optim.m.{name}'] = self.m[name].copy()
            state[f'optim.v.{name}'] = self.v[name].copy()
        return state

    def load_state_dict(self, state, step_count):
        for name, param in self.params.items():
            self.m[name] = np.array(state[f'optim.m.{name}'], dtype=param.dtype)
            self.v[name] = np.array(state[f'optim.v.{name}'], dtype=param.dtype)
        self.step_count = int(step_count)
