# apps/autograd/tensor.py
"""
Tensores densos inmutables con gradiente en modo reverso.

Cada operación diferenciable crea un tensor nuevo y, si hay una cinta
(GradTape) activa en el hilo actual, registra cómo propagar el adjunto hacia
sus entradas. La cinta se recorre al revés en `GradTape.backward`.
"""

import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import GradientError, NonFiniteError, ShapeError

# Almacenamiento local para el hilo actual (cada worker tiene su propia cinta)
_tape_storage = threading.local()


def get_current_tape():
    stack = getattr(_tape_storage, 'stack', None)
    return stack[-1] if stack else None


def _as_array(data, dtype=None):
    if isinstance(data, Tensor):
        data = data.data
    array = np.array(data, dtype=dtype, copy=True)
    if dtype is None and not np.issubdtype(array.dtype, np.floating):
        array = array.astype(np.float64)
    return array


def _check_finite(array, op_name):
    if not np.isfinite(array).all():
        raise NonFiniteError(f"La operación '{op_name}' produjo valores no finitos.")


def _unbroadcast(grad, shape):
    """Reduce un gradiente difundido (broadcast) a la forma original de la entrada."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """
    Arreglo real de forma fija. Los datos son de solo lectura tras construirse.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        array = _as_array(data, dtype)
        _check_finite(array, name or 'tensor')
        array.setflags(write=False)
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.name = name

    # --- Propiedades básicas ---
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data.copy()

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() requiere un tensor de un elemento, forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # --- Aritmética ---
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    # --- Atajos ---
    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def swapaxes(self, a, b):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    @property
    def T(self):
        return transpose(self, None)

    def take(self, indices):
        return take(self, indices)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return power(self, 0.5)

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)

    def tanh(self):
        return tanh(self)

    def cumsum(self, axis=0):
        return cumsum(self, axis)


class Parameter(Tensor):
    """
    Hoja entrenable. Solo el optimizador (o la carga de un checkpoint)
    reemplaza sus valores, siempre entre pasos de entrenamiento.
    """

    def __init__(self, data, dtype=None, name=None):
        super().__init__(data, requires_grad=True, dtype=dtype, name=name)

    def assign(self, values):
        array = np.array(values, dtype=self.data.dtype, copy=True)
        if array.shape != self.data.shape:
            raise ShapeError(f"assign: forma {array.shape} distinta de {self.data.shape}")
        _check_finite(array, f'assign:{self.name}')
        array.setflags(write=False)
        self.data = array


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if isinstance(like, Tensor) else None
    return Tensor(value, dtype=dtype)


@dataclass
class TapeEntry:
    op: str
    output: Tensor
    inputs: tuple
    backward: Optional[Callable]


class GradTape:
    """
    Registro ordenado de operaciones primitivas. El orden de registro es un
    orden topológico válido, así que `backward` lo recorre al revés y visita
    cada operación exactamente una vez.
    """

    def __init__(self):
        self.entries = []

    def __enter__(self):
        stack = getattr(_tape_storage, 'stack', None)
        if stack is None:
            stack = _tape_storage.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_storage.stack.pop()
        return False

    def record(self, op, output, inputs, backward):
        self.entries.append(TapeEntry(op, output, tuple(inputs), backward))

    def backward(self, loss):
        """Devuelve {hoja: gradiente} para cada hoja con requires_grad alcanzada."""
        if not isinstance(loss, Tensor) or loss.data.size != 1:
            raise GradientError('La pérdida debe ser un tensor escalar.')
        if not loss.requires_grad:
            raise GradientError('La pérdida no depende de ningún parámetro entrenable.')

        produced = {id(entry.output) for entry in self.entries}
        if id(loss) not in produced:
            raise GradientError('La pérdida no fue producida por operaciones registradas en esta cinta.')

        tensors = {}
        grads = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            grad = grads.pop(id(entry.output), None)
            if grad is None:
                continue
            if entry.backward is None:
                raise GradientError(f"La operación '{entry.op}' no es diferenciable.")
            input_grads = entry.backward(grad)
            for tensor, tensor_grad in zip(entry.inputs, input_grads):
                if tensor_grad is None or not tensor.requires_grad:
                    continue
                _check_finite(tensor_grad, f'{entry.op} (gradiente)')
                key = id(tensor)
                tensors[key] = tensor
                if key in grads:
                    grads[key] = grads[key] + tensor_grad
                else:
                    grads[key] = tensor_grad

        return {tensors[key]: grad for key, grad in grads.items() if key in tensors}


def _make(op, data, inputs, backward):
    """Crea el tensor resultado y lo registra en la cinta activa si corresponde."""
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    array = np.asarray(data)
    if not np.issubdtype(array.dtype, np.floating):
        array = array.astype(inputs[0].dtype if inputs else np.float64)
    _check_finite(array, op)
    array.setflags(write=False)
    out.data = array
    out.requires_grad = requires_grad
    out.name = None
    if requires_grad:
        tape = get_current_tape()
        if tape is not None:
            tape.record(op, out, inputs, backward)
    return out


def _pair(a, b):
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


# --- Operaciones elementales ---

def add(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make('add', a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make('sub', a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _pair(a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make('mul', a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _pair(a, b)
    if np.any(b.data == 0):
        raise NonFiniteError('División por cero.')

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make('div', a.data / b.data, (a, b), backward)


def power(a, exponent):
    exponent = float(exponent)
    out = np.power(a.data, exponent)

    def backward(g):
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return _make('pow', out, (a,), backward)


def exp(a):
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _make('exp', out, (a,), backward)


def log(a):
    if np.any(a.data <= 0):
        raise NonFiniteError('log de un valor no positivo.')

    def backward(g):
        return (g / a.data,)

    return _make('log', np.log(a.data), (a,), backward)


def sin(a):
    def backward(g):
        return (g * np.cos(a.data),)

    return _make('sin', np.sin(a.data), (a,), backward)


def cos(a):
    def backward(g):
        return (-g * np.sin(a.data),)

    return _make('cos', np.cos(a.data), (a,), backward)


def tanh(a):
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _make('tanh', out, (a,), backward)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a):
    """GELU con la aproximación tanh."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _make('gelu', out, (a,), backward)


def round_(a):
    # No diferenciable: backward la rechaza explícitamente.
    return _make('round', np.round(a.data), (a,), None)


# --- Reducciones y forma ---

def reduce_sum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make('sum', out, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    if count == 0:
        raise ShapeError('mean sobre un eje vacío.')
    return reduce_sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape):
    def backward(g):
        return (g.reshape(a.shape),)

    return _make('reshape', a.data.reshape(shape), (a,), backward)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _make('transpose', np.transpose(a.data, axes), (a,), backward)


def index(a, key):
    def backward(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(full, key, g)
        return (full,)

    return _make('index', a.data[key], (a,), backward)


def take(a, indices):
    """Reúne filas por índice a lo largo del eje 0 (índices de cualquier forma)."""
    indices = np.asarray(indices, dtype=np.int64)

    def backward(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        np.add.at(full, indices, g)
        return (full,)

    return _make('take', a.data[indices], (a,), backward)


def concat(tensors: Sequence[Tensor], axis=0):
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError('concat requiere al menos un tensor.')
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        pieces = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            slicer = [slice(None)] * g.ndim
            slicer[axis] = slice(start, stop)
            pieces.append(g[tuple(slicer)])
        return tuple(pieces)

    return _make('concat', np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence[Tensor], axis=0):
    tensors = tuple(tensors)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make('stack', np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def cumsum(a, axis=0):
    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis),)

    return _make('cumsum', np.cumsum(a.data, axis=axis), (a,), backward)


def masked_fill(a, mask, value=0.0):
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)

    def backward(g):
        return (np.where(mask, 0.0, g),)

    return _make('masked_fill', np.where(mask, value, a.data), (a,), backward)


# --- Álgebra lineal ---

def matmul(a, b):
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError('matmul requiere tensores de al menos 2 dimensiones.')
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f'matmul: {a.shape} @ {b.shape} incompatibles.')

    if b.ndim == 2 and a.ndim > 2:
        # Peso compartido aplicado sobre dimensiones de lote
        k, m = b.shape

        def backward(g):
            ga = g @ b.data.T
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, m)
            return ga, gb
    elif a.ndim == b.ndim:
        if a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f'matmul: lotes distintos {a.shape[:-2]} vs {b.shape[:-2]}.')

        def backward(g):
            return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g
    else:
        raise ShapeError(f'matmul: combinación de formas no soportada {a.shape} @ {b.shape}.')

    return _make('matmul', a.data @ b.data, (a, b), backward)
