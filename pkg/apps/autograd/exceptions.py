# apps/autograd/exceptions.py


class NonFiniteError(ArithmeticError):
    """Un tensor contiene NaN o Inf. Nunca se propaga en silencio."""


class GradientError(RuntimeError):
    """La retropropagación no se puede completar (pérdida no escalar, grafo roto...)."""


class ShapeError(ValueError):
    """Dimensiones incompatibles para la operación solicitada."""
